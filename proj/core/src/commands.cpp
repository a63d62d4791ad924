#include "lfr/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "lfr/checkpoint.hpp"
#include "lfr/errors.hpp"
#include "lfr/eval.hpp"
#include "lfr/run_config.hpp"

namespace lfr {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int map_exception(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitConfig;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("failed writing " + path.string());
}

json selection_report_json(const TrainState& state,
                           const std::vector<ProjectorSignature>& signatures) {
  // cosine matrix restricted to the chosen signatures
  std::vector<ProjectorSignature> chosen;
  for (const auto& sig : signatures) {
    for (int idx : state.selection.chosen_indices) {
      if (sig.projector_index == idx) chosen.push_back(sig);
    }
  }
  auto cos = signature_cosines(chosen);
  json report{{"chosen_indices", state.selection.chosen_indices},
              {"candidate_count", state.selection.candidate_count},
              {"degenerate_candidates", state.degenerate_candidates},
              {"singular_fill", state.selection.singular_fill},
              {"probe_batch_hash", state.probe_batch_hash},
              {"signature_cosines", cos}};
  if (std::isfinite(state.selection.log_det)) report["log_det"] = state.selection.log_det;
  return report;
}

double checkpoint_combinations(int n, int k) {
  double c = 1.0;
  for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
  return c;
}

}  // namespace

int cmd_pretrain(const std::string& config_path, const json& overrides, std::ostream& out,
                 std::ostream& err) {
  try {
    RunConfig cfg = load_run_config(config_path, overrides);
    LoadedData data = load_dataset(cfg.dataset);
    out << "loaded dataset: " << data.train.size() << " train / " << data.test.size()
        << " test rows, " << data.train.dim() << " features";
    if (data.train.rows_dropped || data.test.rows_dropped) {
      out << " (dropped " << data.train.rows_dropped << " train / " << data.test.rows_dropped
          << " test rows with missing values)";
    }
    out << "\n";

    fs::create_directories(cfg.out_dir);
    const fs::path out_dir(cfg.out_dir);
    write_text(out_dir / "effective_config.json", effective_config_json(cfg).dump(2) + "\n");
    if (cfg.dataset.kind == DatasetSpec::Kind::csv) {
      write_text(out_dir / "preprocess_meta.json",
                 feature_meta_to_json(data.train.meta).dump(2) + "\n");
    }

    std::vector<ProjectorSignature> signatures;
    TrainState state = build_state(cfg.train, data.train, &signatures);
    out << "selected projectors:";
    for (int idx : state.selection.chosen_indices) out << ' ' << idx;
    out << "  (log_det " << state.selection.log_det << ", " << state.degenerate_candidates
        << " degenerate candidates)\n";
    write_text(out_dir / "selection_report.json",
               selection_report_json(state, signatures).dump(2) + "\n");

    std::ofstream log_file(out_dir / "train_log.tsv", std::ios::trunc);
    if (!log_file) throw DataError("cannot write train log in " + cfg.out_dir);
    log_file << "epoch\te_loss\tm_loss\twall_s\n";

    // The embedded echo describes the model and data, not where artifacts
    // land; dropping out_dir keeps checkpoints bitwise identical across
    // output locations.
    json echo = effective_config_json(cfg);
    echo.erase("out_dir");
    TrainHooks hooks;
    // minimal tee over two sinks for the TSV lines; the streambuf base must
    // construct before the ostream base receives it
    struct Tee : std::streambuf, std::ostream {
      std::ostream* a;
      std::ostream* b;
      Tee(std::ostream& x, std::ostream& y) : std::ostream(this), a(&x), b(&y) {}
      int overflow(int c) override {
        if (c != EOF) {
          a->put(static_cast<char>(c));
          b->put(static_cast<char>(c));
        }
        return c;
      }
    } tee(out, log_file);
    hooks.log = &tee;
    hooks.on_epoch_end = [&](const TrainState& s, const EpochStats& stats) {
      const int done = stats.epoch + 1;  // epochs completed so far
      if (cfg.train.eval_every > 0 && done % cfg.train.eval_every == 0 &&
          done < cfg.train.train_epochs) {
        save_checkpoint(
            (out_dir / ("checkpoint_epoch" + std::to_string(done) + ".lfrckpt")).string(), s,
            cfg.train, echo, data.train.dim());
      }
    };

    state = train(std::move(state), data.train, cfg.train, hooks);

    const fs::path ckpt = out_dir / "checkpoint.lfrckpt";
    save_checkpoint(ckpt.string(), state, cfg.train, echo, data.train.dim());
    out << "checkpoint written: " << ckpt.string() << " (digest "
        << checkpoint_file_digest(ckpt.string()) << ")\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return map_exception(e, err);
  }
}

int cmd_probe(const std::string& checkpoint_path, const ProbeOptions& options, std::ostream& out,
              std::ostream& err) {
  try {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);

    json config_json = ckpt.config_echo;
    if (!options.config_path.empty()) {
      std::ifstream in(options.config_path);
      if (!in) throw ConfigError("cannot open config file: " + options.config_path);
      in >> config_json;
    }
    RunConfig cfg = parse_run_config(config_json);

    // CSV runs must reuse the exact fitted preprocessing; prefer the
    // transform persisted next to the checkpoint.
    FeatureMeta stored_meta;
    const FeatureMeta* reuse = nullptr;
    if (cfg.dataset.kind == DatasetSpec::Kind::csv) {
      const fs::path meta_path = fs::path(checkpoint_path).parent_path() / "preprocess_meta.json";
      if (fs::exists(meta_path)) {
        std::ifstream meta_in(meta_path);
        json mj;
        meta_in >> mj;
        stored_meta = feature_meta_from_json(mj);
        reuse = &stored_meta;
      }
    }
    LoadedData data = load_dataset(cfg.dataset, reuse);

    const int n_seeds = options.seeds > 0 ? options.seeds : cfg.probe_seeds;
    const std::uint64_t base_seed = options.base_seed != 0 ? options.base_seed : cfg.train.seed;

    std::string source = "lfr";
    if (options.encoder_mode == "random-init") {
      source = "random_init";
    } else if (options.encoder_mode == "identity") {
      source = "identity";
    } else if (options.encoder_mode != "checkpoint") {
      throw ConfigError("--encoder must be one of checkpoint | random-init | identity, got '" +
                        options.encoder_mode + "'");
    }

    json reports = json::array();
    std::vector<double> accs;
    for (int s = 0; s < n_seeds; ++s) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
      EncoderModel encoder;
      if (source == "random_init") {
        // Fresh random parameters, checkpoint architecture.
        encoder = make_encoder(ckpt.input_dim, ckpt.cfg.encoder_hidden, ckpt.cfg.encoder_layers,
                               ckpt.cfg.latent_dim,
                               CounterRng::from_seed(seed, "random_init_encoder"));
      } else if (source == "identity") {
        encoder = make_identity_encoder(data.train.dim());
      } else {
        encoder = ckpt.state.encoder;
      }
      EvalReport r = evaluate(encoder, data.train, data.test, cfg.probe, seed, source,
                              ckpt.file_digest);
      accs.push_back(r.accuracy);
      out << "seed " << seed << ": accuracy " << std::fixed << std::setprecision(4) << r.accuracy
          << std::defaultfloat << "\n";
      reports.push_back(json{{"accuracy", r.accuracy},
                             {"per_class", r.per_class_accuracy},
                             {"n_train", r.n_train},
                             {"n_test", r.n_test},
                             {"seed", r.seed},
                             {"encoder_source", r.encoder_source},
                             {"checkpoint_digest", r.checkpoint_digest}});
    }

    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double stddev = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1))
                                          : 0.0;
    out << "accuracy: " << std::fixed << std::setprecision(4) << mean << " +/- "
        << std::setprecision(4) << stddev << std::defaultfloat << " over " << n_seeds
        << " seed(s)\n";

    json full{{"reports", reports},
              {"mean_accuracy", mean},
              {"std_accuracy", stddev},
              {"seeds", n_seeds},
              {"encoder_source", source},
              {"checkpoint_digest", ckpt.file_digest}};
    const fs::path report_path = options.report_path.empty()
                                     ? fs::path(checkpoint_path).parent_path() /
                                           ("eval_report_" + source + ".json")
                                     : fs::path(options.report_path);
    write_text(report_path, full.dump(2) + "\n");
    return kExitOk;
  } catch (const std::exception& e) {
    return map_exception(e, err);
  }
}

int cmd_select_debug(const std::string& config_path, const json& overrides, std::ostream& out,
                     std::ostream& err) {
  try {
    RunConfig cfg = load_run_config(config_path, overrides);
    LoadedData data = load_dataset(cfg.dataset);

    std::vector<ProjectorSignature> signatures;
    TrainState state = build_state(cfg.train, data.train, &signatures);

    out << "candidates: " << state.selection.candidate_count << " (" << state.degenerate_candidates
        << " degenerate)\n";
    out << "chosen indices:";
    for (int idx : state.selection.chosen_indices) out << ' ' << idx;
    out << "\nlog_det: " << state.selection.log_det << "\n";

    std::vector<ProjectorSignature> chosen;
    for (const auto& sig : signatures) {
      for (int idx : state.selection.chosen_indices) {
        if (sig.projector_index == idx) chosen.push_back(sig);
      }
    }
    out << "signature cosines (chosen x chosen):\n";
    for (const auto& row : signature_cosines(chosen)) {
      for (double v : row) out << std::setw(9) << std::fixed << std::setprecision(5) << v;
      out << "\n";
    }
    out << std::defaultfloat;

    const int n = static_cast<int>(signatures.size());
    if (checkpoint_combinations(n, cfg.train.k) <= 1e6) {
      SelectionResult exact = exhaustive_select(signatures, cfg.train.k);
      const bool match = exact.chosen_indices == state.selection.chosen_indices;
      out << "greedy==exhaustive: " << (match ? "true" : "false") << " (exhaustive log_det "
          << exact.log_det << ")\n";
    } else {
      out << "greedy==exhaustive: skipped (C(N,K) > 1e6)\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    return map_exception(e, err);
  }
}

}  // namespace lfr
