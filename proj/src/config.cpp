#include "intent/config.hpp"

#include "intent/binary_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace intent {

using nlohmann::json;

namespace {

// Keys of the model section filled in from the env section by resolve().
const std::set<std::string> kDerivedModelKeys{"obs_format", "grid_size", "vocab_size", "num_actions"};

template <class E>
struct EnumNames {
  E value;
  const char* name;
};

constexpr EnumNames<ObservationFormat> kFormats[] = {{ObservationFormat::Symbolic, "symbolic"},
                                                     {ObservationFormat::Rendered, "rendered"}};
constexpr EnumNames<LabelMode> kLabelModes[] = {
    {LabelMode::Text, "text"}, {LabelMode::Return, "return"}, {LabelMode::Mixed, "mixed"}};
constexpr EnumNames<Objective> kObjectives[] = {
    {Objective::Full, "full"}, {Objective::NoLab, "no_lab"}, {Objective::NoDem, "no_dem"}};

template <class E, size_t N>
const char* enum_name(const EnumNames<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <class E, size_t N>
E enum_value(const EnumNames<E> (&table)[N], const std::string& s, const std::string& where) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : "|") + e.name;
  throw ConfigError(where + ": expected one of " + allowed + ", got \"" + s + "\"");
}

/// Strict reader over one JSON object: typed fields, unknown keys rejected.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
  }

  template <class T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    const auto where = name_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) {
          out = v.get<T>();
        } else if (v.get<int64_t>() >= 0) {
          out = static_cast<T>(v.get<int64_t>());
        } else {
          throw ConfigError(where + ": expected a nonnegative integer");
        }
      } else {
        out = static_cast<T>(v.get<int64_t>());
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
      out.clear();
      for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(where + ": expected an array of numbers");
        out.push_back(x.get<double>());
      }
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) throw ConfigError(where + ": expected an array of strings");
      out.clear();
      for (const auto& x : v) {
        if (!x.is_string()) throw ConfigError(where + ": expected an array of strings");
        out.push_back(x.get<std::string>());
      }
    } else {
      static_assert(sizeof(T) == 0, "unsupported field type");
    }
  }

  template <class E, size_t N>
  void enum_field(const char* key, E& out, const EnumNames<E> (&table)[N]) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    const auto where = name_ + "." + key;
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    out = enum_value(table, v.get<std::string>(), where);
  }

  void reject(const std::set<std::string>& keys, const std::string& why) {
    for (const auto& k : keys)
      if (j_.contains(k)) throw ConfigError(name_ + "." + k + ": " + why);
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(name_ + ": unknown key \"" + item.key() + "\"");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_model(Section& s, ModelConfig& c) {
  s.enum_field("obs_format", c.obs_format, kFormats);
  s.field("grid_size", c.grid_size);
  s.field("width", c.width);
  s.field("latent_dim", c.latent_dim);
  s.field("vision_blocks", c.vision_blocks);
  s.field("vision_heads", c.vision_heads);
  s.field("encoder_blocks", c.encoder_blocks);
  s.field("encoder_heads", c.encoder_heads);
  s.field("decoder_blocks", c.decoder_blocks);
  s.field("decoder_heads", c.decoder_heads);
  s.field("xattn_heads", c.xattn_heads);
  s.field("xattn_qk_norm", c.xattn_qk_norm);
  s.field("anchor_embedding", c.anchor_embedding);
  s.field("log_std_init", c.log_std_init);
  s.field("mlp_ratio", c.mlp_ratio);
  s.field("chunk_len", c.chunk_len);
  s.field("max_text_len", c.max_text_len);
  s.field("vocab_size", c.vocab_size);
  s.field("num_actions", c.num_actions);
  s.field("prior_window", c.prior_window);
  s.field("chunk_memory", c.chunk_memory);
  s.field("log_std_min", c.log_std_min);
  s.field("log_std_max", c.log_std_max);
}

void read_train(Section& s, TrainConfig& c) {
  s.field("beta1", c.beta1);
  s.field("beta2", c.beta2);
  s.field("batch_size", c.batch_size);
  s.field("steps", c.steps);
  s.field("learning_rate", c.learning_rate);
  s.field("weight_decay", c.weight_decay);
  s.field("warmup_steps", c.warmup_steps);
  s.field("seed", c.seed);
  s.enum_field("label_mode", c.label_mode, kLabelModes);
  s.enum_field("objective", c.objective, kObjectives);
  s.field("double_precision", c.double_precision);
}

void read_eval(Section& s, EvalConfig& c) {
  s.field("episodes", c.episodes);
  s.field("seed", c.seed);
  s.field("displacement", c.displacement);
  s.field("return_conditions", c.return_conditions);
  s.field("collapse_r_min", c.collapse_r_min);
  s.field("collapse_kl_max", c.collapse_kl_max);
  s.field("imitation_r_max", c.imitation_r_max);
  s.field("telemetry_window", c.telemetry_window);
}

void check_eval(const EvalConfig& c) {
  if (c.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (c.displacement < 0) throw ConfigError("eval.displacement must be >= 0");
  if (c.return_conditions.empty()) throw ConfigError("eval.return_conditions must be nonempty");
  if (c.telemetry_window < 1) throw ConfigError("eval.telemetry_window must be >= 1");
  if (!(c.imitation_r_max < c.collapse_r_min)) throw ConfigError("eval: imitation_r_max must be below collapse_r_min");
}

}  // namespace

const char* to_string(LabelMode m) { return enum_name(kLabelModes, m); }
const char* to_string(Objective o) { return enum_name(kObjectives, o); }
const char* to_string(ObservationFormat f) { return enum_name(kFormats, f); }

json to_json(const ModelConfig& c) {
  return {{"obs_format", to_string(c.obs_format)},
          {"grid_size", c.grid_size},
          {"width", c.width},
          {"latent_dim", c.latent_dim},
          {"vision_blocks", c.vision_blocks},
          {"vision_heads", c.vision_heads},
          {"encoder_blocks", c.encoder_blocks},
          {"encoder_heads", c.encoder_heads},
          {"decoder_blocks", c.decoder_blocks},
          {"decoder_heads", c.decoder_heads},
          {"xattn_heads", c.xattn_heads},
          {"xattn_qk_norm", c.xattn_qk_norm},
          {"anchor_embedding", c.anchor_embedding},
          {"log_std_init", c.log_std_init},
          {"mlp_ratio", c.mlp_ratio},
          {"chunk_len", c.chunk_len},
          {"max_text_len", c.max_text_len},
          {"vocab_size", c.vocab_size},
          {"num_actions", c.num_actions},
          {"prior_window", c.prior_window},
          {"chunk_memory", c.chunk_memory},
          {"log_std_min", c.log_std_min},
          {"log_std_max", c.log_std_max}};
}

json to_json(const TrainConfig& c) {
  return {{"beta1", c.beta1},
          {"beta2", c.beta2},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps},
          {"seed", c.seed},
          {"label_mode", to_string(c.label_mode)},
          {"objective", to_string(c.objective)},
          {"double_precision", c.double_precision}};
}

json to_json(const EvalConfig& c) {
  return {{"episodes", c.episodes},
          {"seed", c.seed},
          {"displacement", c.displacement},
          {"return_conditions", c.return_conditions},
          {"collapse_r_min", c.collapse_r_min},
          {"collapse_kl_max", c.collapse_kl_max},
          {"imitation_r_max", c.imitation_r_max},
          {"telemetry_window", c.telemetry_window}};
}

json to_json(const DatasetMeta& m) {
  return {{"env_version", m.env_version},       {"vocabulary", m.vocabulary},
          {"obs_format", to_string(m.obs_format)}, {"grid_size", m.grid_size},
          {"return_mean", m.return_mean},       {"return_std", m.return_std},
          {"labeled_fraction", m.labeled_fraction}};
}

json to_json(const RunConfig& c) {
  auto model = to_json(c.model);
  for (const auto& k : kDerivedModelKeys) model.erase(k);
  return {{"env",
           {{"size", c.env.layout.size},
            {"max_steps", c.env.layout.max_steps},
            {"min_objects", c.env.layout.min_objects},
            {"max_objects", c.env.layout.max_objects},
            {"format", to_string(c.env.format)}}},
          {"data",
           {{"expert", c.data.mix.expert},
            {"medium", c.data.mix.medium},
            {"novice", c.data.mix.novice},
            {"labeled_fraction", c.data.labeled_fraction}}},
          {"model", model},
          {"train", to_json(c.train)},
          {"eval", to_json(c.eval)}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig base) {
  Section s(j, "model");
  read_model(s, base);
  s.finish();
  return base;
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  Section s(j, "train");
  read_train(s, base);
  s.finish();
  return base;
}

EvalConfig eval_config_from_json(const json& j, EvalConfig base) {
  Section s(j, "eval");
  read_eval(s, base);
  s.finish();
  return base;
}

DatasetMeta dataset_meta_from_json(const json& j) {
  DatasetMeta m;
  Section s(j, "dataset");
  s.field("env_version", m.env_version);
  s.field("vocabulary", m.vocabulary);
  s.enum_field("obs_format", m.obs_format, kFormats);
  s.field("grid_size", m.grid_size);
  s.field("return_mean", m.return_mean);
  s.field("return_std", m.return_std);
  s.field("labeled_fraction", m.labeled_fraction);
  s.finish();
  return m;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (!j.is_object()) throw ConfigError("config: expected an object");
  const json empty = json::object();
  auto section = [&](const char* key) -> const json& {
    return j.contains(key) ? j.at(key) : empty;
  };
  {
    Section s(section("env"), "env");
    s.field("size", c.env.layout.size);
    s.field("max_steps", c.env.layout.max_steps);
    s.field("min_objects", c.env.layout.min_objects);
    s.field("max_objects", c.env.layout.max_objects);
    s.enum_field("format", c.env.format, kFormats);
    s.finish();
  }
  {
    Section s(section("data"), "data");
    s.field("expert", c.data.mix.expert);
    s.field("medium", c.data.mix.medium);
    s.field("novice", c.data.mix.novice);
    s.field("labeled_fraction", c.data.labeled_fraction);
    s.finish();
  }
  {
    Section s(section("model"), "model");
    s.reject(kDerivedModelKeys, "derived from the env section; set it there");
    read_model(s, c.model);
    s.finish();
  }
  c.train = train_config_from_json(section("train"));
  c.eval = eval_config_from_json(section("eval"));
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    if (k != "env" && k != "data" && k != "model" && k != "train" && k != "eval")
      throw ConfigError("config: unknown section \"" + k + "\"");
  }
  c.resolve();
  return c;
}

void RunConfig::resolve() {
  model.obs_format = env.format;
  model.grid_size = env.layout.size;
  model.vocab_size = default_vocabulary().size();
  model.num_actions = kNumActions;
  const auto& l = env.layout;
  if (l.size < 3) throw ConfigError("env.size must be >= 3");
  if (l.min_objects < 1 || l.max_objects < l.min_objects || l.max_objects > kNumKinds)
    throw ConfigError("env: need 1 <= min_objects <= max_objects <= " + std::to_string(kNumKinds));
  if (l.max_objects >= l.size * l.size) throw ConfigError("env: too many objects for the grid");
  if (l.max_steps < 1) throw ConfigError("env.max_steps must be >= 1");
  if (data.mix.expert < 0 || data.mix.medium < 0 || data.mix.novice < 0)
    throw ConfigError("data: quality counts must be nonnegative");
  if (data.mix.expert + data.mix.medium + data.mix.novice < 1) throw ConfigError("data: empty dataset");
  if (!(data.labeled_fraction >= 0.0 && data.labeled_fraction <= 1.0))
    throw ConfigError("data.labeled_fraction must lie in [0, 1]");
  check_eval(eval);
  try {
    model.validate();
    train.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::hash() const {
  auto j = to_json(*this);
  // The seed is part of the run directory name separately.
  j["train"].erase("seed");
  return io::hex64(io::fnv1a64(j.dump()));
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

}  // namespace intent
