#pragma once

#include "intent/dataset.hpp"
#include "intent/model.hpp"
#include "intent/objectives.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace intent {

inline constexpr uint32_t kCheckpointFormatVersion = 1;

struct TrainConfig {
  double beta1 = 0.1;
  double beta2 = 0.1;
  int64_t batch_size = 16;
  int64_t steps = 2000;
  double learning_rate = 3e-4;
  double weight_decay = 1e-3;
  /// Full-scale warmup; shortened proportionally for runs under 10k steps.
  int64_t warmup_steps = 2000;
  uint64_t seed = 0;
  LabelMode label_mode = LabelMode::Text;
  Objective objective = Objective::Full;
  bool double_precision = false;

  LossWeights loss_weights() const { return {beta1, beta2, objective}; }
  int64_t effective_warmup() const;
  double learning_rate_at(int64_t step) const;
  void validate() const;
};

/// One telemetry row.
struct DiagnosticsRecord {
  int64_t step = 0;
  double bc = 0.0;
  double kl = 0.0;
  double align = 0.0;
  double r = 0.0;  // NaN when bc + kl == 0
  double total = 0.0;
  double lr = 0.0;
  int64_t labeled = 0;
  int64_t unlabeled = 0;
};

std::string to_ndjson(const DiagnosticsRecord& record);
DiagnosticsRecord parse_diagnostics(const std::string& line);
std::vector<DiagnosticsRecord> read_telemetry(const std::filesystem::path& path);

/// Thrown by train_step when the loss is not finite.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::filesystem::path dump)
      : std::runtime_error(what), dump_path(std::move(dump)) {}
  std::filesystem::path dump_path;
};

/// Owns the model and optimiser; the only writer of parameters.
class Trainer {
 public:
  Trainer(ModelConfig model_config, TrainConfig train_config, DatasetMeta meta = {});

  /// Samples the step's batch noise from (seed, step) and applies one update.
  DiagnosticsRecord train_step(const Batch& batch);
  DiagnosticsRecord train_step(const Batch& batch, const torch::Tensor& noise);

  /// Loss on a batch without touching parameters.
  LossResult evaluate(const Batch& batch, const torch::Tensor& noise);

  /// Deterministic per-step noise rows for a batch of `rows` items.
  torch::Tensor step_noise(int64_t rows) const;
  /// Deterministic per-step batch generator.
  std::mt19937_64 step_rng() const;

  IntentModel& model() { return model_; }
  const ModelConfig& model_config() const { return model_config_; }
  const TrainConfig& train_config() const { return train_config_; }
  const DatasetMeta& dataset_meta() const { return meta_; }
  int64_t step() const { return step_; }
  /// Where non-finite loss dumps are written (defaults to the temp directory).
  void set_dump_directory(std::filesystem::path dir) { dump_dir_ = std::move(dir); }

  void save_checkpoint(const std::filesystem::path& path);
  static Trainer load_checkpoint(const std::filesystem::path& path);

 private:
  ModelConfig model_config_;
  TrainConfig train_config_;
  DatasetMeta meta_;
  IntentModel model_{nullptr};
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  int64_t step_ = 0;
  std::filesystem::path dump_dir_;
};

struct FitOptions {
  /// Telemetry rows are appended here, one per step.
  std::optional<std::filesystem::path> telemetry;
  /// Stop early after this many total steps (simulates an interruption).
  std::optional<int64_t> stop_at;
};

/// Runs train_config.steps steps from scratch.
Trainer fit(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& train_config,
            const FitOptions& options = {});

/// Continues a trainer until its configured step count.
void resume_fit(Trainer& trainer, const Dataset& dataset, const FitOptions& options = {});

struct GradCheckResult {
  /// Worst relative error over entries with a resolvable gradient.
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  /// Entries compared by relative error.
  int64_t checked = 0;
  /// Entries where both gradients sit below the difference quotient's
  /// roundoff bound; they count as agreeing only if |a - n| is below it too.
  int64_t zero_entries = 0;
  bool zeros_agree = true;
  std::string worst_parameter;
};

/// Roundoff bound of a central difference with step h on losses of size |loss|.
double central_difference_roundoff(double loss, double h);

inline constexpr double kGradCheckFloor = 1e-8;

/// Relative error used by grad_check: |a - n| / max(|a|, |n|, floor).
double gradient_relative_error(double analytic, double numeric, double floor = kGradCheckFloor);

using NamedParameters = std::vector<std::pair<std::string, torch::Tensor>>;

/// Central finite differences of `loss` against autograd over `samples`
/// entries of `params`: one entry from every tensor first, the rest uniform.
GradCheckResult grad_check(const std::function<torch::Tensor()>& loss, const NamedParameters& params,
                           double h = 1e-5, int64_t samples = 256, uint64_t seed = 0,
                           double floor = kGradCheckFloor);

/// grad_check of total_loss. Stop-gradient targets are captured once at the
/// unperturbed parameters and held fixed. The model must be in double precision.
GradCheckResult grad_check(IntentModel& model, const Batch& batch, const torch::Tensor& noise,
                           const LossWeights& weights, double h = 1e-5, int64_t samples = 256, uint64_t seed = 0,
                           double floor = kGradCheckFloor);

}  // namespace intent
