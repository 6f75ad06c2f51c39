#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace intent::io {

// Little-endian primitives for the dataset and checkpoint containers.

void write_u8(std::ostream& out, uint8_t v);
void write_u16(std::ostream& out, uint16_t v);
void write_u32(std::ostream& out, uint32_t v);
void write_u64(std::ostream& out, uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_bytes(std::ostream& out, std::string_view bytes);

uint8_t read_u8(std::istream& in);
uint16_t read_u16(std::istream& in);
uint32_t read_u32(std::istream& in);
uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_bytes(std::istream& in, size_t n);

/// 64-bit FNV-1a; used for file digests and config hashes.
uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(uint64_t v);
/// Digest of a whole file's contents, as 16 hex characters.
std::string file_digest(const std::string& path);

}  // namespace intent::io
