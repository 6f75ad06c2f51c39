// Command-line driver: data generation, training, evaluation, diagnostics
// and embedding export.

#include "intent/binary_io.hpp"
#include "intent/config.hpp"
#include "intent/eval.hpp"
#include "intent/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace intent;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    RunConfig c;
    c.resolve();
    return c;
  }
  return load_run_config(path);
}

void check_compatible(const RunConfig& cfg, const DatasetMeta& meta) {
  if (meta.env_version != kEnvSpecVersion) throw ConfigError("dataset was generated by another environment version");
  if (meta.obs_format != cfg.env.format || meta.grid_size != cfg.env.layout.size)
    throw ConfigError("dataset observation format or grid size differs from the config's env section");
  if (meta.vocabulary != default_vocabulary().words()) throw ConfigError("dataset vocabulary differs");
}

int cmd_gen_data(const std::string& config_path, const std::string& out, uint64_t seed) {
  const auto cfg = config_or_default(config_path);
  auto ds = generate_demonstrations({cfg.env.layout, cfg.env.format}, cfg.data.mix, seed);
  ds = normalize_returns(std::move(ds));
  ds = strip_labels(std::move(ds), cfg.data.labeled_fraction, seed);
  save_dataset(ds, out);

  double sum = 0.0, sq = 0.0;
  for (const auto& d : ds.items) sum += (d.raw_return - ds.meta.return_mean) / ds.meta.return_std;
  const double mu = sum / static_cast<double>(ds.size());
  for (const auto& d : ds.items) sq += std::pow((d.raw_return - ds.meta.return_mean) / ds.meta.return_std - mu, 2);
  std::cout << "dataset " << out << '\n'
            << "  n            " << ds.size() << '\n'
            << "  labeled      " << ds.labeled_count() << " (rho " << cfg.data.labeled_fraction << ")\n"
            << "  raw return   mean " << ds.meta.return_mean << " std " << ds.meta.return_std << '\n'
            << "  normalized   mean " << mu << " std " << std::sqrt(sq / static_cast<double>(ds.size())) << '\n'
            << "  digest       " << io::file_digest(out) << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              std::optional<uint64_t> seed, std::optional<int64_t> stop_at, bool resume) {
  auto cfg = config_or_default(config_path);
  if (seed) cfg.train.seed = *seed;
  const auto ds = load_dataset(data);
  check_compatible(cfg, ds.meta);

  const auto run_dir = fs::path(out) / ("run-" + cfg.hash() + "-s" + std::to_string(cfg.train.seed));
  fs::create_directories(run_dir);
  save_run_config(cfg, run_dir / "config.resolved.json");
  const auto ckpt = run_dir / "checkpoint.bin";
  const auto telemetry = run_dir / "telemetry.ndjson";

  FitOptions opts;
  opts.telemetry = telemetry;
  opts.stop_at = stop_at;
  std::optional<Trainer> trainer;
  if (resume && fs::exists(ckpt)) {
    trainer.emplace(Trainer::load_checkpoint(ckpt));
    if (trainer->dataset_meta() != ds.meta) throw ConfigError("checkpoint was trained on a different dataset");
    std::cout << "resuming " << run_dir.string() << " at step " << trainer->step() << '\n';
  } else {
    std::ofstream(telemetry, std::ios::trunc);
    trainer.emplace(cfg.model, cfg.train, ds.meta);
  }
  trainer->set_dump_directory(run_dir);
  resume_fit(*trainer, ds, opts);
  trainer->save_checkpoint(ckpt);

  std::cout << "run " << run_dir.string() << '\n' << "  steps      " << trainer->step() << '\n';
  const auto rows = read_telemetry(telemetry);
  if (!rows.empty()) {
    const auto& last = rows.back();
    std::cout << "  final      bc " << last.bc << " kl " << last.kl << " align " << last.align << " total "
              << last.total << " R " << last.r << '\n';
    const auto rep = collapse_report(rows, cfg.eval);
    std::cout << "  R_final    " << rep.r_final << " (" << to_string(rep.verdict) << ")\n";
  }
  std::cout << "  telemetry  " << io::file_digest(telemetry.string()) << '\n';
  return 0;
}

LayoutOptions eval_layout(const std::string& config_path, const DatasetMeta& meta, EvalConfig& eval) {
  if (config_path.empty()) {
    LayoutOptions layout;
    layout.size = meta.grid_size;
    return layout;
  }
  const auto cfg = load_run_config(config_path);
  eval = cfg.eval;
  return cfg.env.layout;
}

int cmd_eval(const std::string& checkpoint, const std::string& mode, const std::string& config_path,
             const std::string& out, std::optional<int64_t> episodes, std::optional<uint64_t> seed) {
  auto trainer = Trainer::load_checkpoint(checkpoint);
  EvalConfig ec;
  const auto layout = eval_layout(config_path, trainer.dataset_meta(), ec);
  const auto n = episodes.value_or(ec.episodes);
  const auto s = seed.value_or(ec.seed);
  const auto ctx = make_eval_context(trainer, layout);

  EvalReport report;
  if (mode == "text") {
    report = text_suite(ctx, n, s);
  } else if (mode == "video") {
    auto full = displaced_start_suite(ctx, n, 0, s);
    report.suite = "video";
    report.conditions.push_back(full.condition("same_start"));
    report.conditions.back().name = "video";
  } else if (mode == "return") {
    report = return_conditioning_curve(ctx, ec.return_conditions, n, s);
  } else {
    report = displaced_start_suite(ctx, n, ec.displacement, s);
  }
  write_report(report, out);
  std::cout << format_report(report);
  return 0;
}

int cmd_diagnose(const std::string& run_dir) {
  const auto telemetry = fs::path(run_dir) / "telemetry.ndjson";
  if (!fs::exists(telemetry)) {
    std::cerr << "error: no telemetry at " << telemetry.string() << '\n';
    return kExitRuntime;
  }
  EvalConfig ec;
  const auto resolved = fs::path(run_dir) / "config.resolved.json";
  if (fs::exists(resolved)) ec = load_run_config(resolved).eval;
  const auto rows = read_telemetry(telemetry);
  if (rows.empty()) {
    std::cerr << "error: telemetry is empty\n";
    return kExitRuntime;
  }
  const auto rep = collapse_report(rows, ec);
  std::cout << "R_final " << rep.r_final << "\nbc " << rep.bc_final << "\nkl " << rep.kl_final << "\nverdict "
            << to_string(rep.verdict) << '\n';
  return 0;
}

int cmd_embed(const std::string& checkpoint, const std::string& data, const std::string& out) {
  auto trainer = Trainer::load_checkpoint(checkpoint);
  const auto ds = load_dataset(data);
  LayoutOptions layout;
  layout.size = ds.meta.grid_size;
  const auto rows = export_embeddings(make_eval_context(trainer, layout), ds, out);
  std::cout << "wrote " << rows << " embeddings to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent intention learning on a gridworld: data, training, evaluation"};
  app.require_subcommand(1);

  std::string config, out, data, checkpoint, run_dir, mode = "text";
  uint64_t gen_seed = 0;
  std::optional<uint64_t> seed;
  std::optional<int64_t> stop_at, episodes;
  bool resume = false;

  auto* gen = app.add_subcommand("gen-data", "Generate, normalise and label-strip a demonstration dataset");
  gen->add_option("--config", config, "Run config file (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Dataset file to write")->required();
  gen->add_option("--seed", gen_seed, "Generation seed");

  auto* train = app.add_subcommand("train", "Fit a model; writes a run directory");
  train->add_option("--config", config, "Run config file (JSON)")->check(CLI::ExistingFile);
  train->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Parent directory for run directories")->required();
  train->add_option("--seed", seed, "Override train.seed");
  train->add_option("--stop-at", stop_at, "Stop after this many total steps");
  train->add_flag("--resume", resume, "Continue from the run directory's checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a suite");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--mode", mode, "Suite")->check(CLI::IsMember({"text", "video", "return", "displaced"}));
  eval->add_option("--config", config, "Run config supplying env and eval sections")->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Report directory")->required();
  eval->add_option("--episodes", episodes, "Override eval.episodes");
  eval->add_option("--seed", seed, "Override eval.seed");

  auto* diagnose = app.add_subcommand("diagnose", "Collapse/imitation verdict from a run's telemetry");
  diagnose->add_option("--run", run_dir, "Run directory")->required();

  auto* embed = app.add_subcommand("embed", "Export posterior means for every dataset trajectory");
  embed->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  embed->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", out, "CSV file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(config, out, gen_seed);
    if (*train) return cmd_train(config, data, out, seed, stop_at, resume);
    if (*eval) return cmd_eval(checkpoint, mode, config, out, episodes, seed);
    if (*diagnose) return cmd_diagnose(run_dir);
    if (*embed) return cmd_embed(checkpoint, data, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
