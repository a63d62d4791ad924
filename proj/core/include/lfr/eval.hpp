#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lfr/data.hpp"
#include "lfr/nn.hpp"
#include "lfr/tensor.hpp"

namespace lfr {

struct ProbeConfig {
  double l2 = 1e-4;      // L2 strength on weights (bias unregularized)
  int max_iters = 2000;  // full-batch gradient descent cap
  double tol = 1e-5;     // stop when the gradient norm drops below this
};

/// Multinomial logistic-regression head trained on frozen embeddings.
struct ProbeModel {
  Tensor weight;  // [latent x classes]
  Tensor bias;    // [classes]
  std::uint64_t encoder_digest = 0;
  int iterations = 0;
  double final_grad_norm = 0.0;

  /// Argmax class per row; logit ties break toward the lowest class index.
  std::vector<std::int32_t> predict(const Tensor& embeddings) const;
};

/// Frozen forward of the whole dataset in chunks; never records gradients.
Tensor embed_dataset(const EncoderModel& encoder, const Dataset& ds, std::int64_t chunk = 1024);

/// Full-batch gradient descent on the softmax cross-entropy with L2, float64
/// internally. The solver standardizes each embedding dimension with train
/// statistics (folded back into the returned weights) and takes the step
/// size 1 / (0.5 * (lambda_max + 1) + l2) from a deterministic power
/// iteration on the standardized Gram, the +1 covering the intercept.
/// Deterministic given (embeddings, labels, seed); the seed only jitters the
/// tiny uniform weight init.
ProbeModel train_probe(const Tensor& embeddings, std::span<const std::int32_t> labels, int classes,
                       const ProbeConfig& cfg, std::uint64_t seed);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::int64_t n_train = 0;
  std::int64_t n_test = 0;
  std::uint64_t seed = 0;
  std::string encoder_source;  // "lfr", "random_init", "identity"
  std::uint64_t checkpoint_digest = 0;
};

/// Embed both splits with the frozen encoder, fit the probe on train,
/// report exact test accuracy. The encoder is untouched (digest-checked).
EvalReport evaluate(const EncoderModel& encoder, const Dataset& train, const Dataset& test,
                    const ProbeConfig& cfg, std::uint64_t seed, std::string encoder_source,
                    std::uint64_t checkpoint_digest = 0);

}  // namespace lfr
