#pragma once

#include "intent/core.hpp"
#include "intent/gridworld.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace intent {

inline constexpr uint32_t kEnvSpecVersion = 1;
inline constexpr uint32_t kDatasetFormatVersion = 1;

/// One scripted rollout together with where it came from.
struct Demonstration {
  Trajectory trajectory;
  GridSpec spec;
  Quality quality = Quality::Expert;
  double raw_return = 0.0;
  bool success = false;
};

struct DatasetMeta {
  uint32_t env_version = kEnvSpecVersion;
  std::vector<std::string> vocabulary;
  ObservationFormat obs_format = ObservationFormat::Symbolic;
  int grid_size = 7;
  /// Return labels hold (raw - return_mean) / return_std.
  double return_mean = 0.0;
  double return_std = 1.0;
  double labeled_fraction = 1.0;

  /// Stable digest of every field; checkpoints record it.
  std::string hash() const;
  bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
  std::vector<Demonstration> items;
  DatasetMeta meta;

  size_t size() const { return items.size(); }
  size_t labeled_count() const;
};

struct QualityMix {
  int expert = 0;
  int medium = 0;
  int novice = 0;
};

struct GenerationOptions {
  LayoutOptions layout;
  ObservationFormat format = ObservationFormat::Symbolic;
};

/// Rolls out the scripted demonstrator at each quality tier over random
/// solvable layouts. Every item carries its text label and raw return.
Dataset generate_demonstrations(const GenerationOptions& options, const QualityMix& mix, uint64_t seed);

/// Rescales return labels to zero mean and unit population std; composes the
/// affine map into `meta`. Throws DegenerateInput when std is zero.
Dataset normalize_returns(Dataset dataset);

/// Keeps labels on exactly floor(rho * n) uniformly chosen items.
Dataset strip_labels(Dataset dataset, double rho, uint64_t seed);

enum class LabelMode : uint8_t { Text, Return, Mixed };

struct LabeledChunk {
  Trajectory chunk;
  Label label;
};

/// Mixed training batch: demonstration-only chunks plus labeled chunks.
struct Batch {
  std::vector<Trajectory> unlabeled;
  std::vector<LabeledChunk> labeled;

  size_t size() const { return unlabeled.size() + labeled.size(); }
};

/// Draws `batch_size` items uniformly with replacement and cuts each to a
/// random contiguous window of length min(N, chunk_len).
Batch make_batch(const Dataset& dataset, int64_t batch_size, int64_t chunk_len, LabelMode mode,
                 std::mt19937_64& rng);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Population mean/std of the current return labels.
std::pair<double, double> return_label_stats(const Dataset& dataset);

}  // namespace intent
