#include "lfr/nn.hpp"

#include <cmath>
#include <numbers>

#include "lfr/errors.hpp"

namespace lfr {

DenseLayer::DenseLayer(std::int64_t fan_in, std::int64_t fan_out, Activation activation)
    : weight(Tensor::zeros({fan_in, fan_out})),
      bias(Tensor::zeros({fan_out})),
      act(activation) {}

Tensor DenseLayer::forward(const Tensor& x) const {
  Tensor h = add_rowvec(matmul(x, weight), bias);
  return act == Activation::relu ? relu(h) : h;
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (const auto& layer : layers_) h = layer.forward(h);
  return h;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  out.reserve(layers_.size() * 2);
  for (const auto& layer : layers_) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

void Mlp::set_requires_grad(bool v) {
  for (auto& layer : layers_) {
    layer.weight.set_requires_grad(v);
    layer.bias.set_requires_grad(v);
  }
}

void Mlp::zero_grad() {
  for (auto& layer : layers_) {
    layer.weight.zero_grad();
    layer.bias.zero_grad();
  }
}

std::uint64_t params_digest(const Mlp& m) {
  auto params = m.parameters();
  return tensors_digest(params);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::default_uniform: return "default_uniform";
    case InitScheme::beta: return "beta";
    case InitScheme::beta_with_dropout: return "beta_with_dropout";
  }
  return "?";
}

InitScheme init_scheme_from_string(const std::string& s) {
  if (s == "default_uniform") return InitScheme::default_uniform;
  if (s == "beta") return InitScheme::beta;
  if (s == "beta_with_dropout") return InitScheme::beta_with_dropout;
  throw ConfigError("unknown init scheme '" + s + "'");
}

void init_default_uniform(DenseLayer& layer, CounterRng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(layer.fan_in()));
  for (auto& w : layer.weight.mutable_values()) w = rng.uniform(-bound, bound);
  for (auto& b : layer.bias.mutable_values()) b = rng.uniform(-bound, bound);
}

void init_beta(DenseLayer& layer, CounterRng& rng) {
  // Beta(0.5, 0.5) has CDF (2/pi) asin(sqrt(x)); inverse-CDF sampling gives
  // b = sin^2(pi u / 2), and the [-1,1] rescale collapses to -cos(pi u).
  for (auto& w : layer.weight.mutable_values()) {
    const double u = rng.next_double();
    w = static_cast<float>(-std::cos(std::numbers::pi * u));
  }
  for (auto& b : layer.bias.mutable_values()) b = 0.0f;
}

void apply_weight_dropout(DenseLayer& layer, float rate, CounterRng& rng) {
  if (rate < 0.0f || rate >= 1.0f) {
    throw ConfigError("weight dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0f) return;
  for (auto& w : layer.weight.mutable_values()) {
    if (rng.next_float() < rate) w = 0.0f;
  }
}

void init_layer(DenseLayer& layer, const InitSpec& spec, CounterRng& rng) {
  switch (spec.scheme) {
    case InitScheme::default_uniform:
      init_default_uniform(layer, rng);
      break;
    case InitScheme::beta:
      init_beta(layer, rng);
      break;
    case InitScheme::beta_with_dropout:
      init_beta(layer, rng);
      apply_weight_dropout(layer, spec.dropout_rate, rng);
      break;
  }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

namespace {

Mlp make_mlp(std::int64_t input_dim, std::int64_t hidden_dim, int n_layers,
             std::int64_t output_dim, Activation output_act, const InitSpec& spec,
             CounterRng& rng) {
  if (n_layers < 1) throw ConfigError("MLP needs at least one layer");
  std::vector<DenseLayer> layers;
  layers.reserve(static_cast<std::size_t>(n_layers));
  std::int64_t in = input_dim;
  for (int i = 0; i < n_layers; ++i) {
    const bool last = i == n_layers - 1;
    const std::int64_t out = last ? output_dim : hidden_dim;
    DenseLayer layer(in, out, last ? output_act : Activation::relu);
    init_layer(layer, spec, rng);
    layers.push_back(std::move(layer));
    in = out;
  }
  return Mlp(std::move(layers));
}

}  // namespace

EncoderModel make_encoder(std::int64_t input_dim, std::int64_t hidden_dim, int n_layers,
                          std::int64_t latent_dim, CounterRng rng) {
  EncoderModel m;
  InitSpec spec;  // encoder always uses the default uniform init
  m.net = make_mlp(input_dim, hidden_dim, n_layers, latent_dim, Activation::none, spec, rng);
  m.latent_dim = latent_dim;
  m.net.set_requires_grad(true);
  return m;
}

ProjectorModel make_projector(std::int64_t input_dim, std::int64_t hidden_dim, int n_layers,
                              std::int64_t output_dim, const InitSpec& spec,
                              std::uint64_t init_seed) {
  ProjectorModel m;
  CounterRng rng(init_seed);
  m.net = make_mlp(input_dim, hidden_dim, n_layers, output_dim, Activation::relu, spec, rng);
  m.output_dim = output_dim;
  m.init = spec;
  m.init_seed = init_seed;
  m.net.set_requires_grad(false);  // frozen for good
  return m;
}

PredictorModel make_predictor(std::int64_t latent_dim, std::int64_t hidden_dim,
                              std::int64_t output_dim, CounterRng rng) {
  PredictorModel m;
  InitSpec spec;
  if (hidden_dim > 0) {
    m.net = make_mlp(latent_dim, hidden_dim, 2, output_dim, Activation::none, spec, rng);
  } else {
    m.net = make_mlp(latent_dim, 0, 1, output_dim, Activation::none, spec, rng);
  }
  m.net.set_requires_grad(true);
  return m;
}

EncoderModel make_identity_encoder(std::int64_t dim) {
  EncoderModel m;
  DenseLayer layer(dim, dim, Activation::none);
  layer.weight = Tensor::eye(dim);
  m.net = Mlp({std::move(layer)});
  m.latent_dim = dim;
  return m;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<Tensor> params)
    : cfg_(cfg), params_(std::move(params)) {
  m_.reserve(params_.size());
  for (const auto& p : params_) m_.push_back(Tensor::zeros(p.shape()));
  if (cfg_.kind == OptimizerKind::adam) {
    v_.reserve(params_.size());
    for (const auto& p : params_) v_.push_back(Tensor::zeros(p.shape()));
  }
}

void Optimizer::step() {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto theta = params_[pi].mutable_values();
    auto g = params_[pi].grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("optimizer: non-finite gradient in parameter #" + std::to_string(pi) +
                           " (shape " + shape_to_string(params_[pi].shape()) + ", element " +
                           std::to_string(i) + ")");
      }
    }
    if (cfg_.kind == OptimizerKind::adam) {
      auto m = m_[pi].mutable_values();
      auto v = v_[pi].mutable_values();
      const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
      const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = static_cast<double>(g[i]) + cfg_.weight_decay * theta[i];
        const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        theta[i] = static_cast<float>(theta[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    } else {
      auto vel = m_[pi].mutable_values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = static_cast<double>(g[i]) + cfg_.weight_decay * theta[i];
        const double vi = cfg_.momentum * vel[i] + gi;
        vel[i] = static_cast<float>(vi);
        theta[i] = static_cast<float>(theta[i] - cfg_.lr * vi);
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace lfr
