#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "bta/model.hpp"
#include "bta/synthetic.hpp"
#include "bta/training.hpp"

namespace bta {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything one CLI invocation can be driven by. Paths are resolved
/// relative to the config file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec synthetic;
  std::string train_manifest;
  std::string eval_manifest;
  std::string checkpoint;
  std::string out;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SyntheticSpec& s);
nlohmann::json to_json(const RunConfig& c);

/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {});
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

RunConfig load_run_config(const std::filesystem::path& path);

/// Copies the task and the data-dependent sizes of a dataset into `config`.
template <typename T>
void adopt_dataset_shape(ModelConfig& config, const Dataset<T>& dataset);

}  // namespace bta
