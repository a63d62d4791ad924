// Acceptance suite: one line per criterion, [PASS] / [FAIL] / [SKIP].
//
//   --skip-income   run criteria 1-6 only
//   --income-only   run criteria 7-8 only (exit 77 when the census data is
//                   not present under $LFR_DATA_DIR)
//
// Exit code: 0 all executed criteria passed, 1 any failed, 77 skipped.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <vector>

#include "lfr/bbt.hpp"
#include "lfr/checkpoint.hpp"
#include "lfr/commands.hpp"
#include "lfr/diversity.hpp"
#include "lfr/eval.hpp"
#include "lfr/pipeline.hpp"
#include "lfr/run_config.hpp"
#include "support/gradcheck.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// --------------------------------------------------------------------------
// 1. Gradient correctness: encoder, predictor, cosine_matrix, bbt_loss vs
//    float64 central differences (h = 1e-3), >= 20 random configs each.
// --------------------------------------------------------------------------
void criterion_gradients() {
  double worst = 0.0;
  std::string worst_site = "none";
  auto run = [&](const char* site, double err) {
    if (err > worst) {
      worst = err;
      worst_site = site;
    }
  };
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    run("encoder", gradcheck::encoder_case(seed));
    run("predictor", gradcheck::predictor_case(seed));
    run("cosine_matrix", gradcheck::cosine_case(seed));
    run("bbt_loss", gradcheck::bbt_case(seed));
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    run("end_to_end", gradcheck::end_to_end_case(seed));
  }
  report(1, worst < 1e-4, "gradient correctness vs float64 finite differences",
         "worst rel err " + fmt(worst, 3) + " at " + worst_site + ", 20 configs per site");
}

// --------------------------------------------------------------------------
// 2. BBT oracle values.
// --------------------------------------------------------------------------
void criterion_bbt_values() {
  lfr::BBTConfig cfg;  // lambda = 0.005

  lfr::Tensor ortho = lfr::Tensor::from_data({3, 3}, {2, 0, 0, 0, 5, 0, 0, 0, 1});
  const double zero_loss = lfr::bbt_loss({ortho}, {ortho}, cfg).item();

  lfr::Tensor y = lfr::Tensor::from_data({2, 2}, {1, 0, 0, 1});
  lfr::Tensor yhat = lfr::Tensor::from_data({2, 2}, {0, 1, 1, 0});
  const double swap_loss = lfr::bbt_loss({y}, {yhat}, cfg).item();

  const bool pass = std::abs(zero_loss) <= 1e-6 && std::abs(swap_loss - 2.01) <= 1e-6;
  report(2, pass, "BBT oracle values",
         "perfect-orthogonal loss " + fmt(zero_loss, 3) + ", swap case " + fmt(swap_loss, 8) +
             " vs 2 + 2*lambda = 2.01");
}

// --------------------------------------------------------------------------
// 3. DPP correctness: greedy == exhaustive on 50 constructed instances;
//    greedy log_det >= 99th percentile of 1000 random subsets, 10 trials.
// --------------------------------------------------------------------------
std::vector<double> random_unit_vector(std::int64_t dim, lfr::CounterRng& rng) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double norm = std::sqrt(norm2);
  for (auto& x : v) x /= norm;
  return v;
}

void criterion_dpp() {
  int constructed_matches = 0;
  const int instances = 50;
  for (int inst = 0; inst < instances; ++inst) {
    lfr::CounterRng rng(lfr::splitmix64_mix(9000 + static_cast<std::uint64_t>(inst)));
    const int k = 2 + static_cast<int>(rng.next_below(3));                    // 2..4
    const int n = 2 * k + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(12 - 2 * k + 1)));
    const std::int64_t dim = 36;

    // K orthonormal directions
    std::vector<std::vector<double>> basis;
    while (static_cast<int>(basis.size()) < k) {
      auto v = random_unit_vector(dim, rng);
      for (const auto& b : basis) {
        double d = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) d += v[i] * b[i];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * b[i];
      }
      double norm2 = 0.0;
      for (double x : v) norm2 += x * x;
      if (norm2 < 1e-8) continue;
      const double norm = std::sqrt(norm2);
      for (auto& x : v) x /= norm;
      basis.push_back(std::move(v));
    }

    std::vector<lfr::ProjectorSignature> sigs;
    for (int i = 0; i < n; ++i) {
      lfr::ProjectorSignature s;
      s.projector_index = i;
      s.probe_batch_hash = 1;
      if (i < k) {
        s.vector = basis[static_cast<std::size_t>(i)];
      } else {
        // rotate a basis member by an exact angle: cosine in [0.992, 0.998]
        const auto& v = basis[rng.next_below(static_cast<std::uint64_t>(k))];
        auto u = random_unit_vector(dim, rng);
        double d = 0.0;
        for (std::size_t t = 0; t < u.size(); ++t) d += u[t] * v[t];
        double norm2 = 0.0;
        for (std::size_t t = 0; t < u.size(); ++t) {
          u[t] -= d * v[t];
          norm2 += u[t] * u[t];
        }
        const double norm = std::sqrt(norm2);
        const double cos_t = 0.992 + 0.006 * rng.next_double();
        const double sin_t = std::sqrt(1.0 - cos_t * cos_t);
        s.vector.resize(v.size());
        for (std::size_t t = 0; t < v.size(); ++t) {
          s.vector[t] = cos_t * v[t] + sin_t * u[t] / norm;
        }
      }
      sigs.push_back(std::move(s));
    }

    const lfr::SelectionResult greedy = lfr::select_diverse(sigs, k);
    const lfr::SelectionResult exact = lfr::exhaustive_select(sigs, k);
    if (greedy.chosen_indices == exact.chosen_indices) ++constructed_matches;
  }

  // random-projector populations: greedy vs 1000 random subsets
  int percentile_ok = 0;
  const int trials = 10;
  for (int trial = 0; trial < trials; ++trial) {
    lfr::CounterRng rng(lfr::splitmix64_mix(777 + static_cast<std::uint64_t>(trial)));
    lfr::Tensor probe = gradcheck::random_tensor({16, 8}, rng);
    std::vector<lfr::ProjectorSignature> sigs;
    int index = 0;
    while (static_cast<int>(sigs.size()) < 40) {
      lfr::ProjectorModel proj =
          lfr::make_projector(8, 16, 2, 16, lfr::InitSpec{},
                              rng.derive(static_cast<std::uint64_t>(index)).key());
      try {
        auto sig = lfr::compute_signature(proj, probe);
        sig.projector_index = index;
        sigs.push_back(std::move(sig));
      } catch (const lfr::DegenerateSignatureError&) {
      }
      ++index;
    }
    const lfr::SelectionResult greedy = lfr::select_diverse(sigs, 6);

    std::vector<double> dets;
    dets.reserve(1000);
    for (int t = 0; t < 1000; ++t) {
      auto perm = rng.permutation(40);
      std::vector<int> pos(perm.begin(), perm.begin() + 6);
      dets.push_back(lfr::subset_log_abs_det(sigs, pos));
    }
    std::sort(dets.begin(), dets.end());
    const double p99 = dets[static_cast<std::size_t>(std::ceil(0.99 * 1000.0)) - 1];
    if (greedy.log_det >= p99) ++percentile_ok;
  }

  const bool pass = constructed_matches == instances && percentile_ok == trials;
  report(3, pass, "DPP greedy selection",
         "greedy==exhaustive on " + std::to_string(constructed_matches) + "/" +
             std::to_string(instances) + " constructed instances; >= p99 of random subsets in " +
             std::to_string(percentile_ok) + "/" + std::to_string(trials) + " trials");
}

// --------------------------------------------------------------------------
// 4. Phase isolation across a full training run, checked every epoch.
// --------------------------------------------------------------------------
void criterion_phase_isolation() {
  lfr::TrainConfig cfg;
  cfg.k = 4;
  cfg.n_candidates = 16;
  cfg.latent_dim = 16;
  cfg.encoder_hidden = 32;
  cfg.projector_hidden = 16;
  cfg.batch_size = 32;
  cfg.train_epochs = 6;
  cfg.seed = 11;
  auto [train_ds, test_ds] = lfr::make_synthetic_clusters(600, 6, 4, 3, 2.0, 21);
  (void)test_ds;

  lfr::TrainState state = lfr::build_state(cfg, train_ds);
  const std::uint64_t proj0 = state.projector_digest();

  bool ok = true;
  std::string detail = "6 epochs";
  for (int epoch = 0; epoch < cfg.train_epochs && ok; ++epoch) {
    const std::uint64_t theta_before = state.theta_digest();
    const std::uint64_t phi_before = state.phi_digest();
    lfr::e_step_epoch(state, train_ds, cfg, static_cast<std::uint64_t>(epoch));
    if (state.theta_digest() == theta_before) {
      ok = false;
      detail = "E-step left theta unchanged at epoch " + std::to_string(epoch);
    }
    if (state.phi_digest() != phi_before) {
      ok = false;
      detail = "E-step moved phi at epoch " + std::to_string(epoch);
    }
    const std::uint64_t theta_mid = state.theta_digest();
    lfr::m_step_epochs(state, train_ds, cfg, static_cast<std::uint64_t>(epoch));
    if (state.theta_digest() != theta_mid) {
      ok = false;
      detail = "M-step moved theta at epoch " + std::to_string(epoch);
    }
    if (state.phi_digest() == phi_before) {
      ok = false;
      detail = "M-step left phi unchanged at epoch " + std::to_string(epoch);
    }
    if (state.projector_digest() != proj0) {
      ok = false;
      detail = "projector parameters changed at epoch " + std::to_string(epoch);
    }
  }
  report(4, ok, "phase isolation (projectors frozen, theta only in E, phi only in M)", detail);
}

// --------------------------------------------------------------------------
// 5. Determinism: identical config+seed -> bitwise-identical checkpoints;
//    checkpoint round trip is byte identical.
// --------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void criterion_determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("lfr_acceptance_det_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  json cfg{{"out_dir", (root / "run1").string()},
           {"dataset",
            {{"kind", "synthetic"}, {"n", 400}, {"d_signal", 6}, {"d_noise", 4}, {"classes", 3},
             {"sep", 2.5}, {"seed", 13}}},
           {"train",
            {{"k", 3}, {"n_candidates", 12}, {"latent_dim", 12}, {"encoder_hidden", 24},
             {"projector_hidden", 12}, {"batch_size", 32}, {"train_epochs", 3}, {"seed", 29}}}};
  const fs::path cfg_path = root / "config.json";
  {
    std::ofstream out(cfg_path);
    out << cfg.dump(2);
  }

  std::ostringstream sink, esink;
  bool ok = lfr::cmd_pretrain(cfg_path.string(), json::object(), sink, esink) == lfr::kExitOk;
  ok = ok && lfr::cmd_pretrain(cfg_path.string(), json{{"out_dir", (root / "run2").string()}},
                               sink, esink) == lfr::kExitOk;

  std::string detail;
  if (!ok) {
    detail = "pretrain run failed: " + esink.str();
  } else {
    const std::string a = slurp(root / "run1" / "checkpoint.lfrckpt");
    const std::string b = slurp(root / "run2" / "checkpoint.lfrckpt");
    if (a != b) {
      ok = false;
      detail = "two identical runs produced different checkpoint bytes";
    } else {
      lfr::LoadedCheckpoint loaded = lfr::load_checkpoint((root / "run1" / "checkpoint.lfrckpt").string());
      lfr::save_checkpoint((root / "resaved.lfrckpt").string(), loaded.state, loaded.cfg,
                           loaded.config_echo, loaded.input_dim);
      if (slurp(root / "resaved.lfrckpt") != a) {
        ok = false;
        detail = "save(load(file)) differs from the original bytes";
      } else {
        detail = "two runs + round trip, " + std::to_string(a.size()) + " bytes each";
      }
    }
  }
  fs::remove_all(root);
  report(5, ok, "bitwise determinism of checkpoints", detail);
}

// --------------------------------------------------------------------------
// 6. Training progress on the synthetic cluster benchmark.
// --------------------------------------------------------------------------
void criterion_training_progress() {
  bool loss_ok = true;
  std::vector<double> margins;
  std::ostringstream detail;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto [train_ds, test_ds] = lfr::make_synthetic_clusters(2000, 10, 10, 3, 3.0, seed);

    lfr::TrainConfig cfg;
    cfg.k = 4;
    cfg.n_candidates = 40;
    cfg.latent_dim = 64;
    cfg.encoder_hidden = 128;
    cfg.projector_hidden = 64;
    cfg.batch_size = 128;
    cfg.train_epochs = 30;
    cfg.predictor_epochs = 1;
    cfg.seed = seed;

    lfr::TrainState state = lfr::build_state(cfg, train_ds);
    state = lfr::train(std::move(state), train_ds, cfg);

    const double first = state.history.front().e_loss;
    const double last = state.history.back().e_loss;
    if (!(last < first)) loss_ok = false;

    lfr::ProbeConfig probe;
    const lfr::EvalReport lfr_report =
        lfr::evaluate(state.encoder, train_ds, test_ds, probe, seed, "lfr");
    lfr::EncoderModel random_enc =
        lfr::make_encoder(train_ds.dim(), cfg.encoder_hidden, cfg.encoder_layers, cfg.latent_dim,
                          lfr::CounterRng::from_seed(seed, "random_init_encoder"));
    const lfr::EvalReport rand_report =
        lfr::evaluate(random_enc, train_ds, test_ds, probe, seed, "random_init");
    margins.push_back(lfr_report.accuracy - rand_report.accuracy);
    detail << "seed " << seed << ": e-loss " << fmt(first) << "->" << fmt(last) << ", lfr "
           << fmt(lfr_report.accuracy) << " vs rand " << fmt(rand_report.accuracy) << "; ";
  }
  const double mean_margin =
      std::accumulate(margins.begin(), margins.end(), 0.0) / static_cast<double>(margins.size());
  const bool pass = loss_ok && mean_margin > 0.0;
  report(6, pass, "training progress on the synthetic cluster benchmark",
         detail.str() + "mean probe margin " + fmt(mean_margin));
}

// --------------------------------------------------------------------------
// 7 + 8. Census-income reproduction at desk scale.
// --------------------------------------------------------------------------
lfr::CsvSchema income_schema() {
  lfr::CsvSchema s;
  s.has_header = false;
  s.columns = {{"age", lfr::ColumnKind::numeric},
               {"workclass", lfr::ColumnKind::categorical},
               {"fnlwgt", lfr::ColumnKind::numeric},
               {"education", lfr::ColumnKind::categorical},
               {"education-num", lfr::ColumnKind::numeric},
               {"marital-status", lfr::ColumnKind::categorical},
               {"occupation", lfr::ColumnKind::categorical},
               {"relationship", lfr::ColumnKind::categorical},
               {"race", lfr::ColumnKind::categorical},
               {"sex", lfr::ColumnKind::categorical},
               {"capital-gain", lfr::ColumnKind::numeric},
               {"capital-loss", lfr::ColumnKind::numeric},
               {"hours-per-week", lfr::ColumnKind::numeric},
               {"native-country", lfr::ColumnKind::categorical},
               {"income", lfr::ColumnKind::categorical}};
  s.label_column = "income";
  s.label_classes = {"<=50K", ">50K"};
  return s;
}

int criterion_income() {
  const char* env = std::getenv("LFR_DATA_DIR");
  const fs::path data_dir = env != nullptr ? fs::path(env) : fs::path("data");
  const fs::path train_path = data_dir / "adult.data";
  const fs::path test_path = data_dir / "adult.test";
  if (!fs::exists(train_path) || !fs::exists(test_path)) {
    std::cout << "[SKIP] criterion 7: census-income accuracy bands (dataset not found; place "
                 "adult.data and adult.test under "
              << data_dir.string() << ", see README)" << std::endl;
    std::cout << "[SKIP] criterion 8: census-income ordering (same dataset required)" << std::endl;
    return 77;
  }

  const lfr::CsvSchema schema = income_schema();
  lfr::Dataset train_ds = lfr::load_csv_train(train_path.string(), schema);
  lfr::Dataset test_ds = lfr::load_csv_eval(test_path.string(), schema, train_ds.meta);
  std::cout << "income: " << train_ds.size() << " train / " << test_ds.size() << " test rows, "
            << train_ds.dim() << " features after preprocessing" << std::endl;
  if (train_ds.size() != 30162 || test_ds.size() != 15060) {
    report(7, false, "census-income accuracy bands",
           "row counts " + std::to_string(train_ds.size()) + "/" + std::to_string(test_ds.size()) +
               " do not match the published 30162/15060");
    report(8, false, "census-income ordering", "row-count mismatch");
    return 1;
  }

  lfr::TrainConfig cfg;  // published tabular settings
  cfg.k = 6;
  cfg.n_candidates = 60;
  cfg.latent_dim = 256;
  cfg.encoder_hidden = 256;
  cfg.encoder_layers = 4;
  cfg.projector_hidden = 256;
  cfg.projector_layers = 2;
  cfg.batch_size = 128;
  cfg.train_epochs = 100;
  cfg.predictor_epochs = 1;
  cfg.optimizer.kind = lfr::OptimizerKind::adam;
  cfg.optimizer.lr = 1e-3;
  cfg.optimizer.weight_decay = 0.0;
  cfg.seed = 1;

  lfr::TrainState state = lfr::build_state(cfg, train_ds);
  lfr::TrainHooks hooks;
  hooks.log = &std::cout;
  state = lfr::train(std::move(state), train_ds, cfg, hooks);

  lfr::ProbeConfig probe;
  auto mean_accuracy = [&](const std::string& mode) {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      lfr::EncoderModel enc;
      if (mode == "lfr") {
        enc = state.encoder;
      } else if (mode == "random_init") {
        enc = lfr::make_encoder(train_ds.dim(), cfg.encoder_hidden, cfg.encoder_layers,
                                cfg.latent_dim, lfr::CounterRng::from_seed(seed, "random_init_encoder"));
      } else {
        enc = lfr::make_identity_encoder(train_ds.dim());
      }
      const lfr::EvalReport r = lfr::evaluate(enc, train_ds, test_ds, probe, seed, mode);
      std::cout << "  " << mode << " seed " << seed << ": " << fmt(100.0 * r.accuracy, 5)
                << std::endl;
      sum += r.accuracy;
    }
    return 100.0 * sum / 5.0;
  };

  const double lfr_acc = mean_accuracy("lfr");
  const double rand_acc = mean_accuracy("random_init");
  const double raw_acc = mean_accuracy("identity");

  const bool band_lfr = lfr_acc >= 84.0 && lfr_acc <= 86.0;
  const bool band_rand = rand_acc >= 82.0 && rand_acc <= 84.5;
  const bool band_raw = raw_acc >= 84.0 && raw_acc <= 85.5;
  report(7, band_lfr && band_rand && band_raw, "census-income accuracy bands",
         "lfr " + fmt(lfr_acc, 4) + " in [84,86]: " + (band_lfr ? "yes" : "NO") + "; random-init " +
             fmt(rand_acc, 4) + " in [82,84.5]: " + (band_rand ? "yes" : "NO") +
             "; raw logistic " + fmt(raw_acc, 4) + " in [84,85.5]: " + (band_raw ? "yes" : "NO"));

  const double margin = lfr_acc - rand_acc;
  report(8, margin >= 0.5, "census-income ordering (trained encoder beats random init)",
         "margin " + fmt(margin, 3) + " points, needs >= 0.5");
  return g_failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  bool income = true;
  bool fast = true;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--skip-income") income = false;
    if (arg == "--income-only") fast = false;
  }

  if (fast) {
    criterion_gradients();
    criterion_bbt_values();
    criterion_dpp();
    criterion_phase_isolation();
    criterion_determinism();
    criterion_training_progress();
  }
  if (income) {
    const int rc = criterion_income();
    if (rc == 77 && !fast) return 77;
  }
  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all executed criteria passed" << std::endl;
  return 0;
}
