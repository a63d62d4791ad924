#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "lfr/bbt.hpp"
#include "lfr/data.hpp"
#include "lfr/diversity.hpp"
#include "lfr/nn.hpp"

namespace lfr {

struct TrainConfig {
  int k = 6;                 // projectors kept
  int n_candidates = 0;      // 0 -> 10 * k
  std::int64_t latent_dim = 256;
  std::int64_t encoder_hidden = 256;
  int encoder_layers = 4;
  std::int64_t projector_hidden = 256;
  int projector_layers = 2;
  std::vector<std::int64_t> projector_dims;  // empty -> latent_dim; cycled over candidates
  std::int64_t predictor_hidden = 0;         // 0 -> single linear layer
  std::int64_t batch_size = 128;
  int train_epochs = 100;
  int predictor_epochs = 1;  // M
  OptimizerConfig optimizer;
  BBTConfig bbt;
  InitSpec init;             // projector initialization
  std::uint64_t seed = 1;
  int eval_every = 0;        // 0 -> no intermediate checkpoints
  std::int64_t max_steps = 0;  // 0 -> epoch budget; else stop after this many encoder steps
  bool joint_updates = false;          // debug: update theta and phi per batch
  bool per_batch_alternation = false;  // debug: theta step then phi step per batch

  int candidate_count() const { return n_candidates > 0 ? n_candidates : 10 * k; }
  std::int64_t projector_dim(int idx) const;
  /// Throws ConfigError listing every violated constraint.
  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double e_loss = 0.0;
  double m_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainState {
  EncoderModel encoder;
  std::vector<ProjectorModel> projectors;
  std::vector<PredictorModel> predictors;
  Optimizer opt_theta;
  Optimizer opt_phi;
  int epoch = 0;
  std::int64_t encoder_steps = 0;
  SelectionResult selection;
  std::uint64_t probe_batch_hash = 0;
  int degenerate_candidates = 0;
  std::vector<EpochStats> history;
  double last_m_loss = 0.0;

  std::vector<Tensor> theta_params() const { return encoder.parameters(); }
  std::vector<Tensor> phi_params() const;
  std::vector<Tensor> projector_params() const;
  std::uint64_t theta_digest() const;
  std::uint64_t phi_digest() const;
  std::uint64_t projector_digest() const;
};

/// Build the full training state: encoder, N candidate projectors,
/// determinant-maximizing selection of K on one probe batch, K predictors,
/// and both optimizers. Degenerate candidates are discarded; fewer than K
/// usable candidates is fatal. When `signatures_out` is non-null it receives
/// the signatures of every non-degenerate candidate.
TrainState build_state(const TrainConfig& cfg, const Dataset& train,
                       std::vector<ProjectorSignature>* signatures_out = nullptr);

/// One encoder epoch: per batch, forward everything, backward the BBT loss,
/// update theta only. Returns the mean batch loss.
double e_step_epoch(TrainState& state, const Dataset& train, const TrainConfig& cfg,
                    std::uint64_t epoch);

/// M predictor epochs (phi only, theta frozen). Returns the mean loss of the
/// final pass, or the last known loss when M == 0.
double m_step_epochs(TrainState& state, const Dataset& train, const TrainConfig& cfg,
                     std::uint64_t epoch);

struct TrainHooks {
  /// Called after every outer epoch (digest checks, intermediate saves).
  std::function<void(const TrainState&, const EpochStats&)> on_epoch_end;
  /// TSV sink: "epoch<TAB>e_loss<TAB>m_loss<TAB>wall_s". Null = silent.
  std::ostream* log = nullptr;
};

/// The full alternating loop over cfg.train_epochs (or until max_steps).
TrainState train(TrainState state, const Dataset& train, const TrainConfig& cfg,
                 const TrainHooks& hooks = {});

}  // namespace lfr
