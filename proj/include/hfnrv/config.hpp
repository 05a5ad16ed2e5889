#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hfnrv/model.hpp"
#include "hfnrv/train.hpp"

namespace hfnrv {

inline constexpr int kConfigVersion = 1;

struct CompressConfig {
  double prune_ratio = 0.15;
  int finetune_epochs = 0;
  bool operator==(const CompressConfig&) const = default;
};

struct PathsConfig {
  std::string input, output, workdir;
  bool operator==(const PathsConfig&) const = default;
};

struct RunConfig {
  ModelConfig model = desk_model_config();
  TrainConfig train;
  CompressConfig compress;
  PathsConfig paths;
  bool operator==(const RunConfig&) const = default;
};

// Conversions reject unknown keys and wrongly typed values with
// InvalidArgument naming the offending key path; missing keys keep defaults.
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const LossConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RunConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = desk_model_config());
LossConfig loss_config_from_json(const nlohmann::json& j, LossConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// "full" or V1..V10; the config deltas of each ablation.
const std::vector<std::string>& variant_ids();
RunConfig apply_variant(RunConfig cfg, const std::string& id);
std::string describe_variant(const std::string& id);

}  // namespace hfnrv
