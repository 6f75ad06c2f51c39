#include "intent/dataset.hpp"

#include "intent/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace intent {

namespace {

constexpr char kDatasetMagic[8] = {'I', 'N', 'T', 'D', 'S', 'E', 'T', '\0'};
constexpr uint8_t kTagText = 1;
constexpr uint8_t kTagReturn = 2;

Demonstration rollout(const GridSpec& spec, Quality quality, ObservationFormat format, std::mt19937_64& rng) {
  auto episode = run_episode(spec, spec.agent_start, format,
                             [&](const GridEnv& env) { return expert_policy(env.spec(), env.agent(), quality, rng); });
  Demonstration demo;
  demo.trajectory = std::move(episode.trajectory);
  demo.trajectory.text = text_for_task(spec);
  demo.trajectory.ret = ReturnValue{episode.raw_return};
  demo.spec = spec;
  demo.quality = quality;
  demo.raw_return = episode.raw_return;
  demo.success = episode.success;
  return demo;
}

void write_spec(std::ostream& out, const GridSpec& spec) {
  io::write_u8(out, static_cast<uint8_t>(spec.size));
  io::write_u16(out, static_cast<uint16_t>(spec.max_steps));
  io::write_u8(out, static_cast<uint8_t>(spec.agent_start.row));
  io::write_u8(out, static_cast<uint8_t>(spec.agent_start.col));
  io::write_u8(out, static_cast<uint8_t>(spec.target_index));
  io::write_u8(out, static_cast<uint8_t>(spec.objects.size()));
  for (const auto& o : spec.objects) {
    io::write_u8(out, static_cast<uint8_t>(o.color));
    io::write_u8(out, static_cast<uint8_t>(o.shape));
    io::write_u8(out, static_cast<uint8_t>(o.cell.row));
    io::write_u8(out, static_cast<uint8_t>(o.cell.col));
  }
}

GridSpec read_spec(std::istream& in) {
  GridSpec spec;
  spec.size = io::read_u8(in);
  spec.max_steps = io::read_u16(in);
  spec.agent_start.row = io::read_u8(in);
  spec.agent_start.col = io::read_u8(in);
  spec.target_index = io::read_u8(in);
  const int n = io::read_u8(in);
  for (int i = 0; i < n; ++i) {
    GridObject o;
    const auto color = io::read_u8(in);
    const auto shape = io::read_u8(in);
    require(color < kNumColors && shape < kNumShapes, "dataset: bad object kind");
    o.color = static_cast<Color>(color);
    o.shape = static_cast<Shape>(shape);
    o.cell.row = io::read_u8(in);
    o.cell.col = io::read_u8(in);
    spec.objects.push_back(o);
  }
  spec.validate();
  return spec;
}

void write_tensor_f32(std::ostream& out, const torch::Tensor& t) {
  auto c = t.to(torch::kFloat).contiguous();
  io::write_u32(out, static_cast<uint32_t>(c.dim()));
  for (auto s : c.sizes()) io::write_u32(out, static_cast<uint32_t>(s));
  const auto* data = c.data_ptr<float>();
  for (int64_t i = 0; i < c.numel(); ++i) io::write_f32(out, data[i]);
}

torch::Tensor read_tensor_f32(std::istream& in) {
  const auto rank = io::read_u32(in);
  require(rank >= 1 && rank <= 8, "dataset: bad tensor rank");
  std::vector<int64_t> shape;
  for (uint32_t i = 0; i < rank; ++i) shape.push_back(io::read_u32(in));
  auto t = torch::empty(shape, torch::kFloat);
  auto* data = t.data_ptr<float>();
  for (int64_t i = 0; i < t.numel(); ++i) data[i] = io::read_f32(in);
  return t;
}

}  // namespace

std::string DatasetMeta::hash() const {
  std::ostringstream s;
  s << env_version << '|' << static_cast<int>(obs_format) << '|' << grid_size << '|';
  for (const auto& w : vocabulary) s << w << ',';
  s.precision(17);
  s << '|' << return_mean << '|' << return_std << '|' << labeled_fraction;
  return io::hex64(io::fnv1a64(s.str()));
}

size_t Dataset::labeled_count() const {
  return static_cast<size_t>(
      std::count_if(items.begin(), items.end(), [](const Demonstration& d) { return d.trajectory.labeled(); }));
}

Dataset generate_demonstrations(const GenerationOptions& options, const QualityMix& mix, uint64_t seed) {
  require(mix.expert >= 0 && mix.medium >= 0 && mix.novice >= 0, "quality counts must be nonnegative");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.meta.vocabulary = default_vocabulary().words();
  ds.meta.obs_format = options.format;
  ds.meta.grid_size = options.layout.size;
  const std::pair<Quality, int> tiers[] = {
      {Quality::Expert, mix.expert}, {Quality::Medium, mix.medium}, {Quality::Novice, mix.novice}};
  for (const auto& [quality, count] : tiers) {
    for (int i = 0; i < count; ++i) {
      const auto spec = random_solvable_spec(rng, options.layout);
      ds.items.push_back(rollout(spec, quality, options.format, rng));
    }
  }
  return ds;
}

std::pair<double, double> return_label_stats(const Dataset& dataset) {
  std::vector<double> values;
  for (const auto& d : dataset.items)
    if (d.trajectory.ret) values.push_back(d.trajectory.ret->value);
  require(!values.empty(), "no return labels present");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

Dataset normalize_returns(Dataset dataset) {
  size_t with_return = 0;
  for (const auto& d : dataset.items) with_return += d.trajectory.ret ? 1 : 0;
  require(with_return >= 2, "normalize_returns needs at least two return labels");
  const auto [mean, stddev] = return_label_stats(dataset);
  if (!(stddev > 0.0)) throw DegenerateInput("normalize_returns: returns have zero standard deviation");
  for (auto& d : dataset.items)
    if (d.trajectory.ret) d.trajectory.ret->value = (d.trajectory.ret->value - mean) / stddev;
  // Compose with any earlier normalisation so meta always maps raw returns.
  dataset.meta.return_mean += dataset.meta.return_std * mean;
  dataset.meta.return_std *= stddev;
  return dataset;
}

Dataset strip_labels(Dataset dataset, double rho, uint64_t seed) {
  require(rho >= 0.0 && rho <= 1.0, "labeled fraction must lie in [0, 1]");
  const size_t n = dataset.items.size();
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  const auto keep = static_cast<size_t>(std::floor(rho * static_cast<double>(n) + 1e-9));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (size_t i = keep; i < n; ++i) {
    auto& traj = dataset.items[order[i]].trajectory;
    traj.text.reset();
    traj.ret.reset();
  }
  dataset.meta.labeled_fraction = rho;
  return dataset;
}

Batch make_batch(const Dataset& dataset, int64_t batch_size, int64_t chunk_len, LabelMode mode,
                 std::mt19937_64& rng) {
  require(batch_size >= 1 && chunk_len >= 1, "batch size and chunk length must be positive");
  require(!dataset.items.empty(), "cannot sample a batch from an empty dataset");
  std::uniform_int_distribution<size_t> pick(0, dataset.items.size() - 1);
  std::bernoulli_distribution coin(0.5);
  Batch batch;
  for (int64_t b = 0; b < batch_size; ++b) {
    const auto& traj = dataset.items[pick(rng)].trajectory;
    const int64_t len = std::min(traj.length(), chunk_len);
    const int64_t start = std::uniform_int_distribution<int64_t>(0, traj.length() - len)(rng);
    auto chunk = traj.window(start, len);
    std::optional<Label> label;
    switch (mode) {
      case LabelMode::Text:
        if (traj.text) label = *traj.text;
        break;
      case LabelMode::Return:
        if (traj.ret) label = *traj.ret;
        break;
      case LabelMode::Mixed:
        if (traj.text && traj.ret) {
          label = coin(rng) ? Label{*traj.text} : Label{*traj.ret};
        } else if (traj.text) {
          label = *traj.text;
        } else if (traj.ret) {
          label = *traj.ret;
        }
        break;
    }
    if (label) {
      batch.labeled.push_back({std::move(chunk), *label});
    } else {
      batch.unlabeled.push_back(std::move(chunk));
    }
  }
  return batch;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  io::write_bytes(out, std::string_view(kDatasetMagic, sizeof(kDatasetMagic)));
  io::write_u32(out, kDatasetFormatVersion);
  const auto& m = dataset.meta;
  io::write_u32(out, m.env_version);
  io::write_u8(out, static_cast<uint8_t>(m.obs_format));
  io::write_u16(out, static_cast<uint16_t>(m.grid_size));
  io::write_f64(out, m.return_mean);
  io::write_f64(out, m.return_std);
  io::write_f64(out, m.labeled_fraction);
  io::write_u32(out, static_cast<uint32_t>(m.vocabulary.size()));
  for (const auto& w : m.vocabulary) {
    io::write_u32(out, static_cast<uint32_t>(w.size()));
    io::write_bytes(out, w);
  }
  io::write_u64(out, dataset.items.size());
  for (const auto& d : dataset.items) {
    write_spec(out, d.spec);
    io::write_u8(out, static_cast<uint8_t>(d.quality));
    io::write_u8(out, d.success ? 1 : 0);
    io::write_f64(out, d.raw_return);
    const auto& t = d.trajectory;
    io::write_u32(out, static_cast<uint32_t>(t.length()));
    write_tensor_f32(out, t.observations);
    for (auto a : t.actions) io::write_u16(out, static_cast<uint16_t>(a));
    const auto labels = t.labels();
    io::write_u8(out, static_cast<uint8_t>(labels.size()));
    for (const auto& label : labels) {
      if (const auto* text = std::get_if<TextTokens>(&label)) {
        io::write_u8(out, kTagText);
        io::write_u32(out, static_cast<uint32_t>(text->tokens.size()));
        for (auto tok : text->tokens) io::write_u16(out, static_cast<uint16_t>(tok));
      } else {
        io::write_u8(out, kTagReturn);
        io::write_f64(out, std::get<ReturnValue>(label).value);
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing dataset file " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  const auto magic = io::read_bytes(in, sizeof(kDatasetMagic));
  if (magic != std::string_view(kDatasetMagic, sizeof(kDatasetMagic)))
    throw std::runtime_error("not a dataset file: " + path.string());
  const auto version = io::read_u32(in);
  if (version != kDatasetFormatVersion)
    throw std::runtime_error("unsupported dataset format version " + std::to_string(version));
  Dataset ds;
  auto& m = ds.meta;
  m.env_version = io::read_u32(in);
  m.obs_format = static_cast<ObservationFormat>(io::read_u8(in));
  m.grid_size = io::read_u16(in);
  m.return_mean = io::read_f64(in);
  m.return_std = io::read_f64(in);
  m.labeled_fraction = io::read_f64(in);
  const auto vocab = io::read_u32(in);
  for (uint32_t i = 0; i < vocab; ++i) m.vocabulary.push_back(io::read_bytes(in, io::read_u32(in)));
  const auto n = io::read_u64(in);
  ds.items.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    Demonstration d;
    d.spec = read_spec(in);
    d.quality = static_cast<Quality>(io::read_u8(in));
    d.success = io::read_u8(in) != 0;
    d.raw_return = io::read_f64(in);
    const auto len = io::read_u32(in);
    d.trajectory.observations = read_tensor_f32(in);
    for (uint32_t k = 0; k < len; ++k) d.trajectory.actions.push_back(io::read_u16(in));
    const auto nlabels = io::read_u8(in);
    for (uint8_t k = 0; k < nlabels; ++k) {
      const auto tag = io::read_u8(in);
      if (tag == kTagText) {
        TextTokens text;
        const auto mlen = io::read_u32(in);
        for (uint32_t j = 0; j < mlen; ++j) text.tokens.push_back(io::read_u16(in));
        d.trajectory.text = std::move(text);
      } else if (tag == kTagReturn) {
        d.trajectory.ret = ReturnValue{io::read_f64(in)};
      } else {
        throw std::runtime_error("dataset: unknown label tag " + std::to_string(tag));
      }
    }
    d.trajectory.validate(kNumActions, static_cast<int64_t>(m.vocabulary.size()));
    ds.items.push_back(std::move(d));
  }
  return ds;
}

}  // namespace intent
