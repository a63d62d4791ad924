#pragma once

#include <vector>

#include "lfr/tensor.hpp"

namespace lfr {

struct BBTConfig {
  float lambda_offdiag = 0.005f;  // weight on squared off-diagonal cosines
  float eps = 1e-12f;             // norm guard for degenerate rows
  bool mean_reduction = false;    // divide the summed loss by K * m
};

/// Batch cosine-similarity matrix: C[i][j] = <y_i, yhat_j> / (||y_i|| ||yhat_j||),
/// with each norm guarded below by eps. Differentiable w.r.t. both inputs;
/// Gram products accumulate in float64.
///
/// Requires m >= 2 (a 1-row batch has no off-diagonal and points at a
/// misconfigured batch size).
Tensor cosine_matrix(const Tensor& y, const Tensor& yhat, float eps = 1e-12f);

/// Per-projector penalty: sum_i (1 - C_ii)^2 + lambda * sum_{j != i} C_ij^2.
Tensor bbt_penalty(const Tensor& cosine, float lambda_offdiag);

/// Per-projector loss terms (index k), each a scalar tensor.
std::vector<Tensor> bbt_loss_terms(const std::vector<Tensor>& projector_outputs,
                                   const std::vector<Tensor>& predictor_outputs,
                                   const BBTConfig& cfg);

/// Total loss: sum over projectors of bbt_penalty(cosine_k). Gradients reach
/// predictor outputs; projector outputs are produced without grad and stay
/// constant. Scalar >= 0, zero exactly when every cosine matrix is identity.
Tensor bbt_loss(const std::vector<Tensor>& projector_outputs,
                const std::vector<Tensor>& predictor_outputs, const BBTConfig& cfg);

}  // namespace lfr
