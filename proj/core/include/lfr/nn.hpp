#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfr/rng.hpp"
#include "lfr/tensor.hpp"

namespace lfr {

enum class Activation { none, relu };

/// Fully connected layer: y = act(x * W + b), W is [fan_in x fan_out].
struct DenseLayer {
  Tensor weight;
  Tensor bias;
  Activation act = Activation::none;

  DenseLayer() = default;
  DenseLayer(std::int64_t fan_in, std::int64_t fan_out, Activation act);

  std::int64_t fan_in() const { return weight.dim(0); }
  std::int64_t fan_out() const { return weight.dim(1); }
  Tensor forward(const Tensor& x) const;
};

/// Plain MLP over DenseLayers.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {}

  Tensor forward(const Tensor& x) const;
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool v);
  void zero_grad();
  std::int64_t input_dim() const { return layers_.front().fan_in(); }
  std::int64_t output_dim() const { return layers_.back().fan_out(); }

 private:
  std::vector<DenseLayer> layers_;
};

std::uint64_t params_digest(const Mlp& m);

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

enum class InitScheme { default_uniform, beta, beta_with_dropout };

struct InitSpec {
  InitScheme scheme = InitScheme::default_uniform;
  float dropout_rate = 0.4f;  // used only with beta_with_dropout
};

std::string to_string(InitScheme s);
InitScheme init_scheme_from_string(const std::string& s);

/// Weights and bias ~ Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
void init_default_uniform(DenseLayer& layer, CounterRng& rng);

/// Weights w = 2*b - 1 with b ~ Beta(0.5, 0.5) (arcsine law, mass near +/-1),
/// sampled by inverse CDF: w = -cos(pi * u). Biases zero.
void init_beta(DenseLayer& layer, CounterRng& rng);

/// Zero each weight independently with probability `rate`, once. The layer
/// is frozen afterwards so the mask is permanent.
void apply_weight_dropout(DenseLayer& layer, float rate, CounterRng& rng);

void init_layer(DenseLayer& layer, const InitSpec& spec, CounterRng& rng);

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Trainable representation network. Hidden layers ReLU, output linear.
struct EncoderModel {
  Mlp net;
  std::int64_t latent_dim = 0;

  Tensor forward(const Tensor& x) const { return net.forward(x); }
  std::vector<Tensor> parameters() const { return net.parameters(); }
};

/// Frozen random projection network. All layers ReLU (outputs can contain
/// exactly-zero rows, which downstream eps guards absorb).
struct ProjectorModel {
  Mlp net;
  std::int64_t output_dim = 0;
  InitSpec init;
  std::uint64_t init_seed = 0;

  Tensor forward(const Tensor& x) const { return net.forward(x); }
};

/// Trainable head mapping latents to a projector's output space.
/// Default is a single linear layer; predictor_hidden > 0 inserts one
/// ReLU hidden layer.
struct PredictorModel {
  Mlp net;

  Tensor forward(const Tensor& z) const { return net.forward(z); }
  std::vector<Tensor> parameters() const { return net.parameters(); }
};

EncoderModel make_encoder(std::int64_t input_dim, std::int64_t hidden_dim, int n_layers,
                          std::int64_t latent_dim, CounterRng rng);
ProjectorModel make_projector(std::int64_t input_dim, std::int64_t hidden_dim, int n_layers,
                              std::int64_t output_dim, const InitSpec& spec,
                              std::uint64_t init_seed);
PredictorModel make_predictor(std::int64_t latent_dim, std::int64_t hidden_dim,
                              std::int64_t output_dim, CounterRng rng);
/// Single square linear layer with W = I, b = 0 (embeddings equal inputs).
EncoderModel make_identity_encoder(std::int64_t dim);

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double momentum = 0.0;
};

/// Adam / SGD over a fixed parameter list. Weight decay is coupled L2
/// (added to the gradient before the moment updates).
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig cfg, std::vector<Tensor> params);

  /// One update step from the parameters' accumulated grads.
  /// Throws NumericError naming the parameter if a gradient is not finite.
  void step();
  void zero_grad();

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_count_; }
  const std::vector<Tensor>& parameters() const { return params_; }

  // Moment buffers, exposed for checkpointing. Layout matches parameters().
  std::vector<Tensor>& moment1() { return m_; }
  std::vector<Tensor>& moment2() { return v_; }
  const std::vector<Tensor>& moment1() const { return m_; }
  const std::vector<Tensor>& moment2() const { return v_; }
  void set_step_count(std::int64_t c) { step_count_ = c; }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<Tensor> m_;  // Adam first moment / SGD velocity
  std::vector<Tensor> v_;  // Adam second moment (empty for SGD)
  std::int64_t step_count_ = 0;
};

}  // namespace lfr
