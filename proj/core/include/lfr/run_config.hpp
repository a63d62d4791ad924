#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "lfr/data.hpp"
#include "lfr/eval.hpp"
#include "lfr/pipeline.hpp"

namespace lfr {

struct DatasetSpec {
  enum class Kind { csv, synthetic };
  Kind kind = Kind::synthetic;
  // csv
  std::string train_path;
  std::string test_path;
  std::string schema_path;
  // synthetic
  std::int64_t n = 2000;
  std::int64_t d_signal = 10;
  std::int64_t d_noise = 10;
  int classes = 3;
  double sep = 3.0;
  std::uint64_t seed = 1;
};

/// The full run description: what to train on, how, and how to probe.
struct RunConfig {
  DatasetSpec dataset;
  TrainConfig train;
  ProbeConfig probe;
  int probe_seeds = 1;
  std::string out_dir = "runs/out";
};

/// Strict parse: unknown keys are rejected and every problem is reported in
/// one ConfigError. `overrides` (flags) win over the file, which wins over
/// defaults.
RunConfig parse_run_config(const nlohmann::json& file_json,
                           const nlohmann::json& overrides = nlohmann::json::object());
RunConfig load_run_config(const std::string& path,
                          const nlohmann::json& overrides = nlohmann::json::object());

/// The run config with every default resolved; a run is reproducible from
/// this document plus the dataset files.
nlohmann::json effective_config_json(const RunConfig& cfg);

/// TrainConfig subset (used by checkpoints to rebuild model shapes).
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LoadedData {
  Dataset train;
  Dataset test;
};

/// Materialize the dataset spec. For CSV, preprocessing is fitted on the
/// train file unless `reuse_meta` supplies an already-fitted transform.
LoadedData load_dataset(const DatasetSpec& spec, const FeatureMeta* reuse_meta = nullptr);

nlohmann::json feature_meta_to_json(const FeatureMeta& meta);
FeatureMeta feature_meta_from_json(const nlohmann::json& j);

}  // namespace lfr
