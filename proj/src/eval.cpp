#include "intent/eval.hpp"

#include "intent/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace intent {

using nlohmann::json;

namespace {

std::string condition_name(double value) {
  std::ostringstream s;
  s << "return=" << value;
  return s.str();
}

VideoFrames clip_video(const torch::Tensor& frames, int64_t max_len) {
  return {frames.narrow(0, 0, std::min(frames.size(0), max_len))};
}

double normalized(double raw, const DatasetMeta& meta) { return (raw - meta.return_mean) / meta.return_std; }

/// Expert rollout from the layout's start; the video instruction and its actions.
EpisodeResult expert_reference(const GridSpec& spec, ObservationFormat format) {
  std::mt19937_64 unused(0);
  return run_episode(spec, spec.agent_start, format,
                     [&](const GridEnv& env) { return expert_policy(spec, env.agent(), Quality::Expert, unused); });
}

}  // namespace

EvalContext make_eval_context(Trainer& trainer, const LayoutOptions& layout) {
  EvalContext ctx;
  ctx.model = trainer.model();
  ctx.meta = trainer.dataset_meta();
  ctx.layout = layout;
  const auto& tc = trainer.train_config();
  const bool labels = tc.objective != Objective::NoLab && ctx.meta.labeled_fraction > 0.0;
  ctx.trained_modalities[static_cast<size_t>(Modality::Video)] = true;
  ctx.trained_modalities[static_cast<size_t>(Modality::Text)] =
      labels && (tc.label_mode == LabelMode::Text || tc.label_mode == LabelMode::Mixed);
  ctx.trained_modalities[static_cast<size_t>(Modality::Return)] =
      labels && (tc.label_mode == LabelMode::Return || tc.label_mode == LabelMode::Mixed);
  return ctx;
}

RolloutResult rollout(const EvalContext& ctx, const GridSpec& spec, const Instruction& instruction,
                      const RolloutOptions& options) {
  torch::NoGradGuard guard;
  auto model = ctx.model;
  model->eval();
  const auto& cfg = model->config();

  RolloutResult out;
  const auto modality = modality_of(instruction);
  out.modality_warning = !ctx.trained_modalities[static_cast<size_t>(modality)];

  LatentGaussian dist;
  if (const auto* video = std::get_if<VideoFrames>(&instruction))
    dist = model->encode_instruction(clip_video(video->frames, cfg.chunk_len));
  else
    dist = model->encode_instruction(instruction);

  torch::Tensor z = dist.mean;
  if (options.sample_latent) {
    std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
    z = sample_reparameterized(dist, standard_noise({cfg.latent_dim}, rng, model->dtype()), LatentSource::LabelEncoder).z;
  }
  PolicyRunner runner(model, z, options.mode, options.seed);
  const auto start = options.start.value_or(spec.agent_start);
  out.episode = run_episode(spec, start, ctx.meta.obs_format,
                            [&](const GridEnv& env) { return runner.act(env.observe()); });
  return out;
}

bool success_from_trajectory(const GridSpec& spec, Cell start, const Trajectory& trajectory) {
  return replay_reaches_target(spec, start, trajectory.actions);
}

const ConditionResult& EvalReport::condition(const std::string& name) const {
  for (const auto& c : conditions)
    if (c.name == name) return c;
  throw std::out_of_range("no condition named " + name + " in suite " + suite);
}

double binomial_stderr(double p, int64_t n) {
  require(n >= 1 && p >= 0.0 && p <= 1.0, "binomial_stderr: need n >= 1 and p in [0, 1]");
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

ConditionResult summarize(const std::string& name, const std::vector<EpisodeResult>& episodes,
                          const DatasetMeta& meta) {
  ConditionResult r;
  r.name = name;
  r.episodes = static_cast<int64_t>(episodes.size());
  if (episodes.empty()) return r;
  double ret_sum = 0.0, steps_sum = 0.0;
  for (const auto& e : episodes) {
    r.successes += e.success ? 1 : 0;
    ret_sum += normalized(e.raw_return, meta);
    steps_sum += e.steps;
  }
  const auto n = static_cast<double>(episodes.size());
  r.success_rate = static_cast<double>(r.successes) / n;
  r.success_stderr = binomial_stderr(r.success_rate, r.episodes);
  r.mean_normalized_return = ret_sum / n;
  r.mean_steps = steps_sum / n;
  if (episodes.size() > 1) {
    double ss = 0.0;
    for (const auto& e : episodes) ss += std::pow(normalized(e.raw_return, meta) - r.mean_normalized_return, 2);
    r.return_stderr = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return r;
}

EvalReport text_suite(const EvalContext& ctx, int64_t episodes, uint64_t seed) {
  require(episodes >= 1, "text_suite needs episodes >= 1");
  std::mt19937_64 rng(seed);
  std::vector<EpisodeResult> results;
  bool warn = false;
  for (int64_t i = 0; i < episodes; ++i) {
    const auto spec = random_solvable_spec(rng, ctx.layout);
    auto r = rollout(ctx, spec, text_for_task(spec));
    warn = warn || r.modality_warning;
    results.push_back(std::move(r.episode));
  }
  EvalReport report;
  report.suite = "text";
  report.conditions.push_back(summarize("text", results, ctx.meta));
  report.conditions.back().modality_warning = warn;
  if (warn) report.warnings.push_back("text instructions were never seen in training");
  return report;
}

EvalReport displaced_start_suite(const EvalContext& ctx, int64_t n_pairs, int displacement, uint64_t seed) {
  require(n_pairs >= 1 && displacement >= 0, "displaced_start_suite needs n_pairs >= 1 and displacement >= 0");
  std::mt19937_64 rng(seed);
  std::vector<EpisodeResult> same, displaced, replay;
  bool warn = false;
  for (int64_t i = 0; i < n_pairs; ++i) {
    GridSpec spec;
    std::vector<Cell> candidates;
    do {
      spec = random_solvable_spec(rng, ctx.layout);
      candidates.clear();
      if (displacement == 0) {
        candidates.push_back(spec.agent_start);
        break;
      }
      for (int r = 0; r < spec.size; ++r)
        for (int c = 0; c < spec.size; ++c) {
          const Cell cell{r, c};
          if (spec.object_at(cell) || manhattan(cell, spec.agent_start) < displacement) continue;
          if (shortest_path_length(spec, cell)) candidates.push_back(cell);
        }
    } while (candidates.empty());
    const auto s1 = candidates[std::uniform_int_distribution<size_t>(0, candidates.size() - 1)(rng)];

    const auto reference = expert_reference(spec, ctx.meta.obs_format);
    const Instruction video = VideoFrames{reference.trajectory.observations};

    auto a = rollout(ctx, spec, video);
    RolloutOptions from_s1;
    from_s1.start = s1;
    auto b = rollout(ctx, spec, video, from_s1);
    warn = warn || a.modality_warning;
    same.push_back(std::move(a.episode));
    displaced.push_back(std::move(b.episode));

    GridEnv env(spec, s1, ctx.meta.obs_format);
    for (auto action : reference.trajectory.actions) {
      if (env.done()) break;
      env.step(action);
    }
    EpisodeResult copy;
    copy.start = s1;
    copy.success = env.success();
    copy.raw_return = env.total_reward();
    copy.steps = env.steps();
    copy.trajectory.actions = reference.trajectory.actions;
    copy.trajectory.actions.resize(static_cast<size_t>(env.steps()));
    replay.push_back(std::move(copy));
  }
  EvalReport report;
  report.suite = "displaced";
  report.conditions.push_back(summarize("same_start", same, ctx.meta));
  report.conditions.push_back(summarize("displaced", displaced, ctx.meta));
  report.conditions.push_back(summarize("action_replay", replay, ctx.meta));
  for (auto& c : report.conditions) c.modality_warning = warn && c.name != "action_replay";
  return report;
}

EvalReport return_conditioning_curve(const EvalContext& ctx, const std::vector<double>& conditions,
                                     int64_t episodes, uint64_t seed, ActMode mode) {
  require(episodes >= 1 && !conditions.empty(), "return_conditioning_curve needs episodes and conditions");
  // Every condition sees the same layouts.
  std::mt19937_64 rng(seed);
  std::vector<GridSpec> specs;
  for (int64_t i = 0; i < episodes; ++i) specs.push_back(random_solvable_spec(rng, ctx.layout));

  EvalReport report;
  report.suite = "return";
  bool warn = false;
  for (double value : conditions) {
    std::vector<EpisodeResult> results;
    for (size_t i = 0; i < specs.size(); ++i) {
      RolloutOptions opts;
      opts.mode = mode;
      opts.seed = seed + i;
      auto r = rollout(ctx, specs[i], ReturnValue{value}, opts);
      warn = warn || r.modality_warning;
      results.push_back(std::move(r.episode));
    }
    report.conditions.push_back(summarize(condition_name(value), results, ctx.meta));
    report.conditions.back().modality_warning = warn;
  }
  if (warn) report.warnings.push_back("return instructions were never seen in training");
  return report;
}

size_t export_embeddings(const EvalContext& ctx, const Dataset& dataset, const std::filesystem::path& out) {
  torch::NoGradGuard guard;
  auto model = ctx.model;
  model->eval();
  const auto& cfg = model->config();
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f << "index,quality,success,target_text,raw_return,normalized_return";
  for (int64_t k = 0; k < cfg.latent_dim; ++k) f << ",z" << k;
  f << '\n';
  f << std::setprecision(9);
  size_t rows = 0;
  for (const auto& item : dataset.items) {
    const auto& target = item.spec.target();
    auto dist = model->encode_instruction(clip_video(item.trajectory.observations, cfg.chunk_len));
    auto mean = dist.mean.to(torch::kDouble).contiguous();
    f << rows << ',' << to_string(item.quality) << ',' << (item.success ? 1 : 0) << ','
      << task_sentence(target.color, target.shape) << ',' << item.raw_return << ','
      << normalized(item.raw_return, dataset.meta);
    for (int64_t k = 0; k < mean.numel(); ++k) f << ',' << mean[k].item<double>();
    f << '\n';
    ++rows;
  }
  return rows;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Healthy: return "healthy";
    case Verdict::PosteriorCollapse: return "posterior_collapse";
    case Verdict::MechanicalImitation: return "mechanical_imitation";
  }
  return "?";
}

CollapseReport collapse_report(const std::vector<DiagnosticsRecord>& telemetry, const EvalConfig& config) {
  require(!telemetry.empty(), "collapse_report needs a nonempty telemetry log");
  const auto n = static_cast<int64_t>(telemetry.size());
  const auto window = std::min(n, config.telemetry_window);
  double bc = 0.0, kl = 0.0;
  for (int64_t i = n - window; i < n; ++i) {
    bc += telemetry[static_cast<size_t>(i)].bc;
    kl += telemetry[static_cast<size_t>(i)].kl;
  }
  CollapseReport rep;
  rep.bc_final = bc / static_cast<double>(window);
  rep.kl_final = kl / static_cast<double>(window);
  rep.r_final = r_metric(rep.bc_final, rep.kl_final);
  if (rep.r_final > config.collapse_r_min && rep.kl_final < config.collapse_kl_max)
    rep.verdict = Verdict::PosteriorCollapse;
  else if (rep.r_final < config.imitation_r_max)
    rep.verdict = Verdict::MechanicalImitation;
  else
    rep.verdict = Verdict::Healthy;
  return rep;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream s;
  s << "suite: " << report.suite << '\n';
  s << std::left << std::setw(16) << "condition" << std::right << std::setw(9) << "episodes" << std::setw(10)
    << "success" << std::setw(9) << "stderr" << std::setw(11) << "norm_ret" << std::setw(9) << "ret_se"
    << std::setw(8) << "steps" << '\n';
  s << std::fixed;
  for (const auto& c : report.conditions) {
    s << std::left << std::setw(16) << c.name << std::right << std::setw(9) << c.episodes << std::setw(10)
      << std::setprecision(3) << c.success_rate << std::setw(9) << c.success_stderr << std::setw(11)
      << c.mean_normalized_return << std::setw(9) << c.return_stderr << std::setw(8) << std::setprecision(1)
      << c.mean_steps << (c.modality_warning ? "  [untrained modality]" : "") << '\n';
  }
  for (const auto& w : report.warnings) s << "warning: " << w << '\n';
  return s.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.txt") << format_report(report);
  json conditions = json::array();
  for (const auto& c : report.conditions)
    conditions.push_back({{"name", c.name},
                          {"episodes", c.episodes},
                          {"successes", c.successes},
                          {"success_rate", c.success_rate},
                          {"success_stderr", c.success_stderr},
                          {"mean_normalized_return", c.mean_normalized_return},
                          {"return_stderr", c.return_stderr},
                          {"mean_steps", c.mean_steps},
                          {"modality_warning", c.modality_warning}});
  json j{{"suite", report.suite}, {"conditions", conditions}, {"warnings", report.warnings}};
  std::ofstream(dir / "report.json") << j.dump(2) << '\n';
}

}  // namespace intent
