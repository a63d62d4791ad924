#include "lfr/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

std::int64_t TrainConfig::projector_dim(int idx) const {
  if (projector_dims.empty()) return latent_dim;
  return projector_dims[static_cast<std::size_t>(idx) % projector_dims.size()];
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (k < 1) problems.push_back("k must be >= 1");
  if (n_candidates != 0 && n_candidates < k) problems.push_back("n_candidates must be 0 or >= k");
  if (latent_dim < 1) problems.push_back("latent_dim must be >= 1");
  if (encoder_hidden < 1) problems.push_back("encoder_hidden must be >= 1");
  if (encoder_layers < 1) problems.push_back("encoder_layers must be >= 1");
  if (projector_layers < 1) problems.push_back("projector_layers must be >= 1");
  if (projector_hidden < 1) problems.push_back("projector_hidden must be >= 1");
  for (auto d : projector_dims) {
    if (d < 1) problems.push_back("projector_dims entries must be >= 1");
  }
  if (predictor_hidden < 0) problems.push_back("predictor_hidden must be >= 0");
  if (batch_size < 2) problems.push_back("batch_size must be >= 2");
  if (train_epochs < 0) problems.push_back("train_epochs must be >= 0");
  if (predictor_epochs < 0) problems.push_back("predictor_epochs must be >= 0");
  if (max_steps < 0) problems.push_back("max_steps must be >= 0");
  if (eval_every < 0) problems.push_back("eval_every must be >= 0");
  if (!(optimizer.lr >= 0.0)) problems.push_back("optimizer.lr must be >= 0");
  if (!(bbt.lambda_offdiag >= 0.0f) || !std::isfinite(bbt.lambda_offdiag))
    problems.push_back("bbt.lambda must be finite and >= 0");
  if (init.dropout_rate < 0.0f || init.dropout_rate >= 1.0f)
    problems.push_back("init.dropout_rate must be in [0, 1)");
  if (joint_updates && per_batch_alternation)
    problems.push_back("joint_updates and per_batch_alternation are mutually exclusive");
  if (!problems.empty()) {
    std::ostringstream os;
    os << "invalid training configuration:";
    for (const auto& p : problems) os << "\n  - " << p;
    throw ConfigError(os.str());
  }
}

std::vector<Tensor> TrainState::phi_params() const {
  std::vector<Tensor> out;
  for (const auto& p : predictors) {
    auto ps = p.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<Tensor> TrainState::projector_params() const {
  std::vector<Tensor> out;
  for (const auto& p : projectors) {
    auto ps = p.net.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::uint64_t TrainState::theta_digest() const {
  auto ps = theta_params();
  return tensors_digest(ps);
}

std::uint64_t TrainState::phi_digest() const {
  auto ps = phi_params();
  return tensors_digest(ps);
}

std::uint64_t TrainState::projector_digest() const {
  auto ps = projector_params();
  return tensors_digest(ps);
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream) {
  return CounterRng::from_seed(seed, stream).key();
}

void set_phase_flags(TrainState& state, bool theta, bool phi) {
  state.encoder.net.set_requires_grad(theta);
  for (auto& p : state.predictors) p.net.set_requires_grad(phi);
}

struct BatchLoss {
  Tensor total;
  std::vector<Tensor> terms;
};

/// Projector forwards run outside the tape (frozen targets); encoder runs
/// on the tape only when `encoder_on_tape`.
BatchLoss forward_batch(TrainState& state, const Tensor& x, const TrainConfig& cfg,
                        bool encoder_on_tape) {
  std::vector<Tensor> proj_outs;
  proj_outs.reserve(state.projectors.size());
  {
    NoGradScope ng;
    for (const auto& proj : state.projectors) proj_outs.push_back(proj.forward(x));
  }
  Tensor z;
  if (encoder_on_tape) {
    z = state.encoder.forward(x);
  } else {
    NoGradScope ng;
    z = state.encoder.forward(x);
  }
  std::vector<Tensor> pred_outs;
  pred_outs.reserve(state.predictors.size());
  for (const auto& pred : state.predictors) pred_outs.push_back(pred.forward(z));

  BatchLoss out;
  out.terms = bbt_loss_terms(proj_outs, pred_outs, cfg.bbt);
  out.total = add_n(out.terms);
  if (cfg.bbt.mean_reduction) {
    const auto kk = static_cast<float>(out.terms.size());
    const auto m = static_cast<float>(x.dim(0));
    out.total = scale(out.total, 1.0f / (kk * m));
  }
  return out;
}

[[noreturn]] void throw_nan_loss(const char* phase, std::uint64_t epoch, std::int64_t batch_index,
                                 const BatchLoss& loss) {
  std::ostringstream os;
  os << phase << " epoch " << epoch << ", batch " << batch_index
     << ": non-finite loss; per-projector terms:";
  for (std::size_t k = 0; k < loss.terms.size(); ++k) {
    os << " k=" << k << ": " << loss.terms[k].item();
  }
  throw NumericError(os.str());
}

}  // namespace

TrainState build_state(const TrainConfig& cfg, const Dataset& train,
                       std::vector<ProjectorSignature>* signatures_out) {
  cfg.validate();
  if (train.size() == 0) throw DataError("build_state: dataset is empty");
  if (cfg.batch_size > train.size()) {
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                      std::to_string(train.size()));
  }
  const std::int64_t d_in = train.dim();

  TrainState state;
  state.encoder = make_encoder(d_in, cfg.encoder_hidden, cfg.encoder_layers, cfg.latent_dim,
                               CounterRng::from_seed(cfg.seed, "encoder_init"));

  // Probe batch: first cfg.batch_size rows of a run-seeded shuffle.
  auto probe_perm =
      CounterRng::from_seed(cfg.seed, "probe_batch").permutation(train.size());
  probe_perm.resize(static_cast<std::size_t>(cfg.batch_size));
  Tensor probe = take_rows(train.features, probe_perm);

  // N candidates; degenerate signatures are discarded with a count.
  const int n = cfg.candidate_count();
  CounterRng cand_rng = CounterRng::from_seed(cfg.seed, "candidate_init");
  std::vector<ProjectorModel> candidates;
  candidates.reserve(static_cast<std::size_t>(n));
  std::vector<ProjectorSignature> signatures;
  signatures.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ProjectorModel cand =
        make_projector(d_in, cfg.projector_hidden, cfg.projector_layers, cfg.projector_dim(i),
                       cfg.init, cand_rng.derive(static_cast<std::uint64_t>(i)).key());
    try {
      ProjectorSignature sig = compute_signature(cand, probe);
      sig.projector_index = i;
      signatures.push_back(std::move(sig));
      candidates.push_back(std::move(cand));
    } catch (const DegenerateSignatureError&) {
      ++state.degenerate_candidates;
      candidates.push_back(std::move(cand));  // keep indices aligned
    }
  }
  if (static_cast<int>(signatures.size()) < cfg.k) {
    throw NumericError("only " + std::to_string(signatures.size()) + " of " + std::to_string(n) +
                       " candidate projectors produced valid signatures; need k=" +
                       std::to_string(cfg.k));
  }
  state.probe_batch_hash = signatures.front().probe_batch_hash;
  state.selection = select_diverse(signatures, cfg.k);
  if (signatures_out != nullptr) *signatures_out = signatures;

  CounterRng pred_rng = CounterRng::from_seed(cfg.seed, "predictor_init");
  for (std::size_t slot = 0; slot < state.selection.chosen_indices.size(); ++slot) {
    const int idx = state.selection.chosen_indices[slot];
    state.projectors.push_back(std::move(candidates[static_cast<std::size_t>(idx)]));
    state.predictors.push_back(make_predictor(cfg.latent_dim, cfg.predictor_hidden,
                                              state.projectors.back().output_dim,
                                              pred_rng.derive(static_cast<std::uint64_t>(slot))));
  }

  state.opt_theta = Optimizer(cfg.optimizer, state.theta_params());
  state.opt_phi = Optimizer(cfg.optimizer, state.phi_params());
  return state;
}

double e_step_epoch(TrainState& state, const Dataset& train, const TrainConfig& cfg,
                    std::uint64_t epoch) {
  set_phase_flags(state, /*theta=*/true, /*phi=*/cfg.joint_updates);

  auto iter = batches(train, cfg.batch_size, stream_seed(cfg.seed, "e_step_data"), epoch);
  double loss_sum = 0.0;
  std::int64_t batch_count = 0;
  std::int64_t batch_index = 0;
  while (auto batch = iter.next()) {
    if (cfg.max_steps > 0 && state.encoder_steps >= cfg.max_steps) break;
    GradTape tape;
    TapeScope scope(tape);
    BatchLoss loss = forward_batch(state, batch->features, cfg, /*encoder_on_tape=*/true);
    if (!std::isfinite(loss.total.item())) throw_nan_loss("E-step", epoch, batch_index, loss);
    state.opt_theta.zero_grad();
    if (cfg.joint_updates) state.opt_phi.zero_grad();
    backward(loss.total);
    state.opt_theta.step();
    if (cfg.joint_updates) state.opt_phi.step();
    ++state.encoder_steps;
    loss_sum += loss.total.item();
    ++batch_count;
    ++batch_index;
  }
  return batch_count > 0 ? loss_sum / static_cast<double>(batch_count) : 0.0;
}

double m_step_epochs(TrainState& state, const Dataset& train, const TrainConfig& cfg,
                     std::uint64_t epoch) {
  if (cfg.predictor_epochs == 0) return state.last_m_loss;
  set_phase_flags(state, /*theta=*/false, /*phi=*/true);

  double final_pass_mean = 0.0;
  for (int pass = 0; pass < cfg.predictor_epochs; ++pass) {
    const std::uint64_t shuffle_epoch =
        epoch * static_cast<std::uint64_t>(cfg.predictor_epochs) + static_cast<std::uint64_t>(pass);
    auto iter = batches(train, cfg.batch_size, stream_seed(cfg.seed, "m_step_data"), shuffle_epoch);
    double loss_sum = 0.0;
    std::int64_t batch_count = 0;
    std::int64_t batch_index = 0;
    while (auto batch = iter.next()) {
      GradTape tape;
      TapeScope scope(tape);
      BatchLoss loss = forward_batch(state, batch->features, cfg, /*encoder_on_tape=*/false);
      if (!std::isfinite(loss.total.item())) throw_nan_loss("M-step", epoch, batch_index, loss);
      state.opt_phi.zero_grad();
      backward(loss.total);
      state.opt_phi.step();
      loss_sum += loss.total.item();
      ++batch_count;
      ++batch_index;
    }
    final_pass_mean = batch_count > 0 ? loss_sum / static_cast<double>(batch_count) : 0.0;
  }
  state.last_m_loss = final_pass_mean;
  return final_pass_mean;
}

namespace {

/// Per-batch alternation (the "one iteration" reading): one theta step, then
/// M phi steps, per mini-batch.
std::pair<double, double> per_batch_epoch(TrainState& state, const Dataset& train,
                                          const TrainConfig& cfg, std::uint64_t epoch) {
  auto iter = batches(train, cfg.batch_size, stream_seed(cfg.seed, "e_step_data"), epoch);
  double e_sum = 0.0, m_sum = 0.0;
  std::int64_t batch_count = 0;
  std::int64_t batch_index = 0;
  while (auto batch = iter.next()) {
    if (cfg.max_steps > 0 && state.encoder_steps >= cfg.max_steps) break;
    {
      set_phase_flags(state, true, false);
      GradTape tape;
      TapeScope scope(tape);
      BatchLoss loss = forward_batch(state, batch->features, cfg, true);
      if (!std::isfinite(loss.total.item())) throw_nan_loss("E-step", epoch, batch_index, loss);
      state.opt_theta.zero_grad();
      backward(loss.total);
      state.opt_theta.step();
      ++state.encoder_steps;
      e_sum += loss.total.item();
    }
    for (int pass = 0; pass < cfg.predictor_epochs; ++pass) {
      set_phase_flags(state, false, true);
      GradTape tape;
      TapeScope scope(tape);
      BatchLoss loss = forward_batch(state, batch->features, cfg, false);
      if (!std::isfinite(loss.total.item())) throw_nan_loss("M-step", epoch, batch_index, loss);
      state.opt_phi.zero_grad();
      backward(loss.total);
      state.opt_phi.step();
      if (pass == cfg.predictor_epochs - 1) m_sum += loss.total.item();
    }
    ++batch_count;
    ++batch_index;
  }
  const double denom = batch_count > 0 ? static_cast<double>(batch_count) : 1.0;
  const double m_mean = cfg.predictor_epochs > 0 ? m_sum / denom : state.last_m_loss;
  if (cfg.predictor_epochs > 0) state.last_m_loss = m_mean;
  return {e_sum / denom, m_mean};
}

}  // namespace

TrainState train(TrainState state, const Dataset& train_ds, const TrainConfig& cfg,
                 const TrainHooks& hooks) {
  // train_epochs is the total budget: resuming a loaded checkpoint continues
  // from state.epoch rather than restarting the count.
  while (state.epoch < cfg.train_epochs) {
    if (cfg.max_steps > 0 && state.encoder_steps >= cfg.max_steps) break;
    const auto t0 = std::chrono::steady_clock::now();
    double e_loss = 0.0, m_loss = 0.0;
    const auto epoch_u = static_cast<std::uint64_t>(state.epoch);
    if (cfg.per_batch_alternation) {
      std::tie(e_loss, m_loss) = per_batch_epoch(state, train_ds, cfg, epoch_u);
    } else if (cfg.joint_updates) {
      e_loss = e_step_epoch(state, train_ds, cfg, epoch_u);
      m_loss = e_loss;  // joint mode has no separate predictor phase
      state.last_m_loss = m_loss;
    } else {
      e_loss = e_step_epoch(state, train_ds, cfg, epoch_u);
      m_loss = m_step_epochs(state, train_ds, cfg, epoch_u);
    }
    const auto t1 = std::chrono::steady_clock::now();

    EpochStats stats;
    stats.epoch = state.epoch;
    stats.e_loss = e_loss;
    stats.m_loss = m_loss;
    stats.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    state.history.push_back(stats);
    ++state.epoch;

    if (hooks.log != nullptr) {
      (*hooks.log) << stats.epoch << '\t' << stats.e_loss << '\t' << stats.m_loss << '\t'
                   << stats.wall_seconds << '\n';
      hooks.log->flush();
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(state, stats);
  }
  return state;
}

}  // namespace lfr
