#include "intent/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace intent::io {

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
  char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw std::runtime_error("unexpected end of file");
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u8(std::ostream& out, uint8_t v) { write_le(out, v); }
void write_u16(std::ostream& out, uint16_t v) { write_le(out, v); }
void write_u32(std::ostream& out, uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, uint64_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<uint32_t>(v)); }
void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<uint64_t>(v)); }
void write_bytes(std::ostream& out, std::string_view bytes) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

uint8_t read_u8(std::istream& in) { return read_le<uint8_t>(in); }
uint16_t read_u16(std::istream& in) { return read_le<uint16_t>(in); }
uint32_t read_u32(std::istream& in) { return read_le<uint32_t>(in); }
uint64_t read_u64(std::istream& in) { return read_le<uint64_t>(in); }
float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<uint32_t>(in)); }
double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<uint64_t>(in)); }

std::string read_bytes(std::istream& in, size_t n) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("unexpected end of file");
  return s;
}

uint64_t fnv1a64(std::string_view bytes, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

}  // namespace intent::io
