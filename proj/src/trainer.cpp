#include "intent/trainer.hpp"

#include "intent/binary_io.hpp"
#include "intent/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace intent {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'I', 'N', 'T', 'C', 'K', 'P', 'T', '\0'};

// Independent streams derived from (seed, step, stream id).
std::mt19937_64 derived_rng(uint64_t seed, int64_t step, uint32_t stream) {
  const auto s = static_cast<uint64_t>(step);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(s),
                    static_cast<uint32_t>(s >> 32), stream};
  return std::mt19937_64(seq);
}

constexpr uint32_t kBatchStream = 0;
constexpr uint32_t kNoiseStream = 1;

double json_number(const json& v) {
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

int64_t TrainConfig::effective_warmup() const {
  const double scale = std::min(1.0, static_cast<double>(steps) / 10000.0);
  return std::max<int64_t>(1, std::llround(static_cast<double>(warmup_steps) * scale));
}

double TrainConfig::learning_rate_at(int64_t step) const {
  const auto w = effective_warmup();
  return learning_rate * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(w));
}

void TrainConfig::validate() const {
  require(beta1 >= 0.0 && std::isfinite(beta1), "beta1 must be finite and >= 0");
  require(beta2 >= 0.0 && std::isfinite(beta2), "beta2 must be finite and >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(steps >= 0, "steps must be >= 0");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be finite and >= 0");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay must be finite and >= 0");
  require(warmup_steps >= 0, "warmup_steps must be >= 0");
}

std::string to_ndjson(const DiagnosticsRecord& r) {
  json j{{"step", r.step},   {"bc", r.bc},        {"kl", r.kl},           {"align", r.align},
         {"R", r.r},         {"total", r.total},  {"lr", r.lr},           {"labeled", r.labeled},
         {"unlabeled", r.unlabeled}};
  return j.dump();
}

DiagnosticsRecord parse_diagnostics(const std::string& line) {
  const auto j = json::parse(line);
  DiagnosticsRecord r;
  r.step = j.at("step").get<int64_t>();
  r.bc = json_number(j.at("bc"));
  r.kl = json_number(j.at("kl"));
  r.align = json_number(j.at("align"));
  r.r = json_number(j.at("R"));
  r.total = json_number(j.at("total"));
  r.lr = json_number(j.at("lr"));
  r.labeled = j.at("labeled").get<int64_t>();
  r.unlabeled = j.at("unlabeled").get<int64_t>();
  return r;
}

std::vector<DiagnosticsRecord> read_telemetry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read telemetry " + path.string());
  std::vector<DiagnosticsRecord> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_diagnostics(line));
  return rows;
}

Trainer::Trainer(ModelConfig model_config, TrainConfig train_config, DatasetMeta meta)
    : model_config_(std::move(model_config)), train_config_(std::move(train_config)), meta_(std::move(meta)) {
  model_config_.validate();
  train_config_.validate();
  torch::manual_seed(train_config_.seed);
  model_ = IntentModel(model_config_);
  if (train_config_.double_precision) model_->to(torch::kDouble);
  optimizer_ = std::make_unique<torch::optim::AdamW>(
      model_->parameters(),
      torch::optim::AdamWOptions(train_config_.learning_rate).weight_decay(train_config_.weight_decay));
  dump_dir_ = std::filesystem::temp_directory_path() / "intent-dumps";
}

std::mt19937_64 Trainer::step_rng() const { return derived_rng(train_config_.seed, step_, kBatchStream); }

torch::Tensor Trainer::step_noise(int64_t rows) const {
  auto rng = derived_rng(train_config_.seed, step_, kNoiseStream);
  return standard_noise({rows, model_config_.latent_dim}, rng, model_->dtype());
}

DiagnosticsRecord Trainer::train_step(const Batch& batch) {
  return train_step(batch, step_noise(static_cast<int64_t>(batch.size())));
}

DiagnosticsRecord Trainer::train_step(const Batch& batch, const torch::Tensor& noise) {
  const double lr = train_config_.learning_rate_at(step_);
  for (auto& group : optimizer_->param_groups()) group.options().set_lr(lr);

  model_->train();
  optimizer_->zero_grad();
  auto terms = compute_terms(model_, batch, noise, train_config_.loss_weights());
  const auto& bd = terms.breakdown;

  DiagnosticsRecord rec;
  rec.step = step_;
  rec.bc = bd.bc;
  rec.kl = bd.kl;
  rec.align = bd.align;
  rec.total = bd.total;
  rec.lr = lr;
  rec.labeled = static_cast<int64_t>(batch.labeled.size());
  rec.unlabeled = static_cast<int64_t>(batch.unlabeled.size());
  rec.r = std::numeric_limits<double>::quiet_NaN();

  auto abort = [&](const std::string& what) {
    std::error_code ec;
    std::filesystem::create_directories(dump_dir_, ec);
    const auto path = dump_dir_ / ("nonfinite-step" + std::to_string(step_) + ".json");
    json dump{{"reason", what},
              {"record", json::parse(to_ndjson(rec))},
              {"item_loss", std::vector<double>()},
              {"model", to_json(model_config_)},
              {"train", to_json(train_config_)}};
    auto items = terms.item_loss.detach().to(torch::kDouble).contiguous();
    for (int64_t i = 0; i < items.numel(); ++i) dump["item_loss"].push_back(items[i].item<double>());
    std::ofstream(path) << dump.dump(2) << '\n';
    throw TrainingAborted(what + " at step " + std::to_string(step_) + "; diagnostics in " + path.string(), path);
  };

  if (!std::isfinite(bd.total) || !std::isfinite(bd.bc) || !std::isfinite(bd.kl)) abort("non-finite loss");
  if (bd.bc + bd.kl > 0.0) rec.r = r_metric(bd.bc, bd.kl);

  if (terms.total.requires_grad()) {
    terms.total.backward();
    for (const auto& p : model_->parameters())
      if (p.grad().defined() && !torch::isfinite(p.grad()).all().item<bool>()) abort("non-finite gradient");
    optimizer_->step();
  }
  ++step_;
  return rec;
}

LossResult Trainer::evaluate(const Batch& batch, const torch::Tensor& noise) {
  torch::NoGradGuard guard;
  model_->eval();
  return total_loss(model_, batch, noise, train_config_.loss_weights());
}

void Trainer::save_checkpoint(const std::filesystem::path& path) {
  json params = json::array();
  for (const auto& item : model_->named_parameters()) params.push_back({{"name", item.key()}, {"shape", item.value().sizes().vec()}});
  json header{{"step", step_},
              {"model", to_json(model_config_)},
              {"train", to_json(train_config_)},
              {"dataset", to_json(meta_)},
              {"dataset_hash", meta_.hash()},
              {"parameters", params}};

  std::ostringstream model_bytes, optim_bytes;
  {
    torch::serialize::OutputArchive ar;
    model_->save(ar);
    ar.save_to(model_bytes);
  }
  {
    torch::serialize::OutputArchive ar;
    optimizer_->save(ar);
    ar.save_to(optim_bytes);
  }

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    const auto h = header.dump();
    io::write_bytes(out, std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
    io::write_u32(out, kCheckpointFormatVersion);
    io::write_u32(out, static_cast<uint32_t>(h.size()));
    io::write_bytes(out, h);
    for (const auto* blob : {&model_bytes, &optim_bytes}) {
      const auto s = blob->str();
      io::write_u64(out, s.size());
      io::write_bytes(out, s);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  const auto magic = io::read_bytes(in, sizeof(kCheckpointMagic));
  if (magic != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw std::runtime_error(path.string() + " is not a checkpoint");
  const auto version = io::read_u32(in);
  if (version != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto header = json::parse(io::read_bytes(in, io::read_u32(in)));

  Trainer t(model_config_from_json(header.at("model")), train_config_from_json(header.at("train")),
            dataset_meta_from_json(header.at("dataset")));
  if (t.meta_.hash() != header.at("dataset_hash").get<std::string>())
    throw std::runtime_error("checkpoint dataset hash mismatch");

  const auto& expected = header.at("parameters");
  const auto named = t.model_->named_parameters();
  if (expected.size() != named.size()) throw std::runtime_error("checkpoint parameter count mismatch");
  for (size_t i = 0; i < named.size(); ++i) {
    const auto& e = expected[i];
    if (e.at("name").get<std::string>() != named[i].key() ||
        e.at("shape").get<std::vector<int64_t>>() != named[i].value().sizes().vec())
      throw std::runtime_error("checkpoint parameter mismatch at " + named[i].key());
  }

  {
    std::istringstream blob(io::read_bytes(in, io::read_u64(in)));
    torch::serialize::InputArchive ar;
    ar.load_from(blob);
    t.model_->load(ar);
  }
  {
    std::istringstream blob(io::read_bytes(in, io::read_u64(in)));
    torch::serialize::InputArchive ar;
    ar.load_from(blob);
    t.optimizer_->load(ar);
  }
  t.step_ = header.at("step").get<int64_t>();
  return t;
}

void resume_fit(Trainer& trainer, const Dataset& dataset, const FitOptions& options) {
  require(trainer.dataset_meta() == dataset.meta, "dataset does not match the trainer's dataset meta");
  require(dataset.size() > 0, "fit needs a nonempty dataset");
  const auto& tc = trainer.train_config();
  const auto& mc = trainer.model_config();
  const auto last = std::min(tc.steps, options.stop_at.value_or(tc.steps));

  std::ofstream log;
  if (options.telemetry) {
    log.open(*options.telemetry, std::ios::app);
    if (!log) throw std::runtime_error("cannot open telemetry " + options.telemetry->string());
  }
  while (trainer.step() < last) {
    auto rng = trainer.step_rng();
    const auto batch = make_batch(dataset, tc.batch_size, mc.chunk_len, tc.label_mode, rng);
    const auto rec = trainer.train_step(batch);
    if (log.is_open()) log << to_ndjson(rec) << '\n' << std::flush;
  }
}

Trainer fit(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& train_config,
            const FitOptions& options) {
  Trainer trainer(model_config, train_config, dataset.meta);
  resume_fit(trainer, dataset, options);
  return trainer;
}

double gradient_relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double central_difference_roundoff(double loss, double h) {
  // A few hundred ulps of the loss, divided by the 2h denominator.
  return 256.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(loss), 1.0) / (2.0 * h);
}

GradCheckResult grad_check(const std::function<torch::Tensor()>& loss, const NamedParameters& params, double h,
                           int64_t samples, uint64_t seed, double floor) {
  require(!params.empty(), "grad_check needs parameters");
  require(h > 0.0, "grad_check step must be positive");
  for (const auto& [name, p] : params) {
    require(p.scalar_type() == torch::kDouble, "grad_check requires double precision (" + name + ")");
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  loss().backward();

  // Entry selection: one from each tensor, then uniform over all entries.
  std::mt19937_64 rng(seed);
  std::vector<std::pair<size_t, int64_t>> picks;
  std::vector<int64_t> offsets{0};
  for (const auto& np : params) offsets.push_back(offsets.back() + np.second.numel());
  for (size_t i = 0; i < params.size() && static_cast<int64_t>(picks.size()) < samples; ++i) {
    std::uniform_int_distribution<int64_t> pick(0, params[i].second.numel() - 1);
    picks.emplace_back(i, pick(rng));
  }
  std::uniform_int_distribution<int64_t> any(0, offsets.back() - 1);
  while (static_cast<int64_t>(picks.size()) < samples) {
    const auto flat = any(rng);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const auto tensor = static_cast<size_t>(it - offsets.begin() - 1);
    picks.emplace_back(tensor, flat - offsets[tensor]);
  }

  GradCheckResult result;
  torch::NoGradGuard guard;
  for (const auto& [ti, entry] : picks) {
    const auto& [name, p] = params[ti];
    auto flat = p.view(-1);
    const double analytic = p.grad().defined() ? p.grad().view(-1)[entry].item<double>() : 0.0;
    const double original = flat[entry].item<double>();
    flat[entry].fill_(original + h);
    const double up = loss().item<double>();
    flat[entry].fill_(original - h);
    const double down = loss().item<double>();
    flat[entry].fill_(original);
    const double numeric = (up - down) / (2.0 * h);
    result.max_abs_error = std::max(result.max_abs_error, std::abs(analytic - numeric));
    const double roundoff = central_difference_roundoff(std::max(std::abs(up), std::abs(down)), h);
    if (std::abs(analytic) <= roundoff && std::abs(numeric) <= roundoff) {
      result.zeros_agree = result.zeros_agree && std::abs(analytic - numeric) <= roundoff;
      ++result.zero_entries;
      continue;
    }
    const double rel = gradient_relative_error(analytic, numeric, floor);
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = name + "[" + std::to_string(entry) + "]";
    }
    ++result.checked;
  }
  return result;
}

GradCheckResult grad_check(IntentModel& model, const Batch& batch, const torch::Tensor& noise,
                           const LossWeights& weights, double h, int64_t samples, uint64_t seed, double floor) {
  require(model->dtype() == torch::kDouble, "grad_check requires a double-precision model");
  torch::Tensor target;
  {
    // Labeled rows of z are the label-encoder draws the alignment term sees.
    torch::NoGradGuard guard;
    target = compute_terms(model, batch, noise, weights).z.detach();
  }
  NamedParameters params;
  for (const auto& item : model->named_parameters()) params.emplace_back(item.key(), item.value());
  auto fn = [&] { return total_loss(model, batch, noise, weights, target).total; };
  return grad_check(fn, params, h, samples, seed, floor);
}

}  // namespace intent
