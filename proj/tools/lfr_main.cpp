// lfr: self-supervised representation learning by predicting the outputs of
// frozen random projector networks (LFR), with a Batch-wise Barlow Twins
// objective and determinant-maximizing projector selection.
//
// Subcommands:
//   pretrain      train an encoder from a JSON run config
//   probe         logistic-regression probe of a checkpointed encoder
//   select-debug  inspect projector diversity selection
//
// Exit codes: 0 ok, 1 config error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lfr/commands.hpp"

namespace {

// Flags override config-file fields, which override built-in defaults.
struct CommonOverrides {
  std::int64_t seed = -1;
  std::string out_dir;
  int epochs = -1;
  int k = -1;
  std::int64_t batch_size = -1;
  double lr = -1.0;
  std::int64_t latent_dim = -1;
  int predictor_epochs = -1;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    nlohmann::json train = nlohmann::json::object();
    if (seed >= 0) train["seed"] = seed;
    if (epochs >= 0) train["train_epochs"] = epochs;
    if (k >= 0) train["k"] = k;
    if (batch_size >= 0) train["batch_size"] = batch_size;
    if (lr >= 0.0) train["optimizer"] = nlohmann::json{{"lr", lr}};
    if (latent_dim >= 0) train["latent_dim"] = latent_dim;
    if (predictor_epochs >= 0) train["predictor_epochs"] = predictor_epochs;
    if (!train.empty()) j["train"] = train;
    if (!out_dir.empty()) j["out_dir"] = out_dir;
    return j;
  }
};

void add_common_flags(CLI::App* cmd, CommonOverrides& o) {
  cmd->add_option("--seed", o.seed, "Override train.seed");
  cmd->add_option("--out", o.out_dir, "Override out_dir");
  cmd->add_option("--epochs", o.epochs, "Override train.train_epochs");
  cmd->add_option("--k", o.k, "Override train.k (projector count)");
  cmd->add_option("--batch-size", o.batch_size, "Override train.batch_size");
  cmd->add_option("--lr", o.lr, "Override train.optimizer.lr");
  cmd->add_option("--latent-dim", o.latent_dim, "Override train.latent_dim");
  cmd->add_option("--predictor-epochs", o.predictor_epochs, "Override train.predictor_epochs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LFR: learning from random data projectors"};
  app.require_subcommand(1);

  std::string config_path;
  CommonOverrides overrides;

  auto* pretrain = app.add_subcommand("pretrain", "Train an encoder from a run config");
  pretrain->add_option("--config", config_path, "Run config JSON")->required();
  add_common_flags(pretrain, overrides);

  std::string checkpoint_path;
  lfr::ProbeOptions probe_options;
  auto* probe = app.add_subcommand("probe", "Probe a checkpointed encoder");
  probe->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  probe->add_option("--config", probe_options.config_path,
                    "Run config JSON (default: the checkpoint's embedded config)");
  probe->add_option("--encoder", probe_options.encoder_mode,
                    "Encoder source: checkpoint | random-init | identity");
  probe->add_option("--seeds", probe_options.seeds, "Number of probe seeds (mean +/- std)");
  probe->add_option("--seed", probe_options.base_seed, "Base probe seed");
  probe->add_option("--report", probe_options.report_path, "Eval report output path");

  auto* select = app.add_subcommand("select-debug", "Inspect projector diversity selection");
  select->add_option("--config", config_path, "Run config JSON")->required();
  add_common_flags(select, overrides);

  CLI11_PARSE(app, argc, argv);

  if (pretrain->parsed()) return lfr::cmd_pretrain(config_path, overrides.to_json());
  if (probe->parsed()) return lfr::cmd_probe(checkpoint_path, probe_options);
  if (select->parsed()) return lfr::cmd_select_debug(config_path, overrides.to_json());
  return lfr::kExitConfig;
}
