#pragma once

#include <string>

#include <json.hpp>

#include "san/datamodel.hpp"
#include "san/model.hpp"
#include "san/train.hpp"

namespace san {

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json preprocess_to_json(const PreprocessOptions& p);
PreprocessOptions preprocess_from_json(const nlohmann::json& j);

nlohmann::json train_options_to_json(const TrainOptions& t);
TrainOptions train_options_from_json(const nlohmann::json& j);

// One JSON file configures a run; an exact echo lands in the run's output
// directory so any run is reproducible from (echo, seed).
struct RunConfig {
  int schema_version = 1;
  std::string train_manifest;
  std::string eval_manifest;  // empty: reuse train_manifest
  std::string protocol = "plain";
  ModelConfig model;
  PreprocessOptions preprocess;
  TrainOptions train;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::string& path);
void write_run_config(const RunConfig& config, const std::string& path);

}  // namespace san
