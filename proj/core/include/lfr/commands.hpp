#pragma once

#include <iostream>
#include <string>

#include <nlohmann/json.hpp>

namespace lfr {

// Exit codes shared by all commands:
//   0 success, 1 configuration error, 2 data error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Train end to end from a config file; writes checkpoint.lfrckpt,
/// train_log.tsv, selection_report.json and effective_config.json (plus
/// preprocess_meta.json for CSV datasets) into the output directory.
int cmd_pretrain(const std::string& config_path, const nlohmann::json& overrides,
                 std::ostream& out = std::cout, std::ostream& err = std::cerr);

struct ProbeOptions {
  std::string config_path;    // optional; defaults to the checkpoint's config echo
  std::string encoder_mode = "checkpoint";  // checkpoint | random-init | identity
  int seeds = 0;              // 0 -> config value
  std::uint64_t base_seed = 0;  // 0 -> config train seed
  std::string report_path;    // optional; defaults next to the checkpoint
};

/// Probe a frozen checkpointed encoder with the logistic-regression head;
/// prints per-seed accuracy and mean +/- std, writes an EvalReport JSON.
int cmd_probe(const std::string& checkpoint_path, const ProbeOptions& options,
              std::ostream& out = std::cout, std::ostream& err = std::cerr);

/// Candidate generation + diversity selection inspection: prints chosen
/// indices, log-determinant and the chosen-signature cosine matrix, and
/// compares greedy against the exhaustive optimum when C(N, K) <= 1e6.
int cmd_select_debug(const std::string& config_path, const nlohmann::json& overrides,
                     std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace lfr
