#pragma once

#include "intent/dataset.hpp"
#include "intent/model.hpp"
#include "intent/trainer.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace intent {

struct EvalConfig {
  int64_t episodes = 200;
  uint64_t seed = 7;
  int displacement = 3;
  std::vector<double> return_conditions{-1.0, 0.0, 1.0};
  /// Collapse/imitation cutoffs for collapse_report.
  double collapse_r_min = 0.99;
  double collapse_kl_max = 1e-3;
  double imitation_r_max = 0.05;
  /// Telemetry rows averaged into R_final.
  int64_t telemetry_window = 50;
};

/// Read-only view of a trained model for evaluation workers.
struct EvalContext {
  IntentModel model{nullptr};
  DatasetMeta meta;
  LayoutOptions layout;
  /// Indexed by Modality; false means that instruction type never trained the encoder.
  std::array<bool, 3> trained_modalities{true, true, true};
};

/// Trained modalities follow from the label mode, objective and labeled fraction.
EvalContext make_eval_context(Trainer& trainer, const LayoutOptions& layout);

struct RolloutOptions {
  ActMode mode = ActMode::Greedy;
  /// Condition on a latent sample instead of the encoder mean.
  bool sample_latent = false;
  uint64_t seed = 0;
  /// Start cell; defaults to the layout's agent_start.
  std::optional<Cell> start;
};

struct RolloutResult {
  EpisodeResult episode;
  /// Set when the instruction's modality never trained the encoder.
  bool modality_warning = false;
};

RolloutResult rollout(const EvalContext& ctx, const GridSpec& spec, const Instruction& instruction,
                      const RolloutOptions& options = {});

/// Recomputes success from a stored rollout by replaying its actions.
bool success_from_trajectory(const GridSpec& spec, Cell start, const Trajectory& trajectory);

struct ConditionResult {
  std::string name;
  int64_t episodes = 0;
  int64_t successes = 0;
  double success_rate = 0.0;
  double success_stderr = 0.0;
  double mean_normalized_return = 0.0;
  double return_stderr = 0.0;
  double mean_steps = 0.0;
  bool modality_warning = false;
};

struct EvalReport {
  std::string suite;
  std::vector<ConditionResult> conditions;
  std::vector<std::string> warnings;

  const ConditionResult& condition(const std::string& name) const;
};

/// Binomial standard error sqrt(p(1-p)/n).
double binomial_stderr(double p, int64_t n);

/// Accumulates episodes into a ConditionResult.
ConditionResult summarize(const std::string& name, const std::vector<EpisodeResult>& episodes,
                          const DatasetMeta& meta);

/// Text-instruction following on random layouts.
EvalReport text_suite(const EvalContext& ctx, int64_t episodes, uint64_t seed);

/// Video instruction from an expert reference recorded at s0, evaluated from
/// s0 ("same_start") and from a start s1 at Manhattan distance >= displacement
/// ("displaced"), plus the replay-the-video's-actions baseline from s1
/// ("action_replay").
EvalReport displaced_start_suite(const EvalContext& ctx, int64_t n_pairs, int displacement, uint64_t seed);

/// Mean achieved normalised return for each return condition.
EvalReport return_conditioning_curve(const EvalContext& ctx, const std::vector<double>& conditions,
                                     int64_t episodes, uint64_t seed, ActMode mode = ActMode::Greedy);

/// Flat CSV: one row per trajectory, metadata columns then the posterior mean.
/// Returns the number of rows written.
size_t export_embeddings(const EvalContext& ctx, const Dataset& dataset, const std::filesystem::path& out);

enum class Verdict : uint8_t { Healthy, PosteriorCollapse, MechanicalImitation };
const char* to_string(Verdict v);

struct CollapseReport {
  double r_final = 0.0;
  double kl_final = 0.0;
  double bc_final = 0.0;
  Verdict verdict = Verdict::Healthy;
};

/// Verdict from the tail of a telemetry log.
CollapseReport collapse_report(const std::vector<DiagnosticsRecord>& telemetry, const EvalConfig& config = {});

std::string format_report(const EvalReport& report);
/// Writes <dir>/report.txt and <dir>/report.json.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace intent
