#pragma once

#include "intent/dataset.hpp"
#include "intent/eval.hpp"
#include "intent/model.hpp"
#include "intent/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace intent {

/// Schema violation in a run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvConfig {
  LayoutOptions layout;
  ObservationFormat format = ObservationFormat::Symbolic;
};

struct DataConfig {
  QualityMix mix{200, 0, 0};
  double labeled_fraction = 0.5;
};

/// Declarative run configuration with sections env/data/model/train/eval.
struct RunConfig {
  EnvConfig env;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  /// Copies env-derived fields (grid size, observation format, vocabulary)
  /// into the model section and validates everything.
  void resolve();
  std::string hash() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const DatasetMeta& m);
nlohmann::json to_json(const RunConfig& c);

/// Strict parsers: unknown keys and ill-typed values raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig base = {});
DatasetMeta dataset_meta_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

const char* to_string(LabelMode m);
const char* to_string(Objective o);
const char* to_string(ObservationFormat f);

}  // namespace intent
