#include "lfr/bbt.hpp"

#include <string>

#include "lfr/errors.hpp"

namespace lfr {

Tensor cosine_matrix(const Tensor& y, const Tensor& yhat, float eps) {
  if (y.rank() != 2 || yhat.rank() != 2 || y.shape() != yhat.shape()) {
    throw ShapeError("cosine_matrix: shapes must match and be rank 2, got " +
                     shape_to_string(y.shape()) + " vs " + shape_to_string(yhat.shape()));
  }
  if (y.dim(0) < 2) {
    throw ContractError("cosine_matrix: batch must have m >= 2 rows, got " +
                        std::to_string(y.dim(0)));
  }
  Tensor u = row_l2_normalize(y, eps);
  Tensor v = row_l2_normalize(yhat, eps);
  return matmul(u, transpose(v), MatmulAccum::f64);
}

Tensor bbt_penalty(const Tensor& cosine, float lambda_offdiag) {
  if (cosine.rank() != 2 || cosine.dim(0) != cosine.dim(1)) {
    throw ShapeError("bbt_penalty: cosine matrix must be square, got " +
                     shape_to_string(cosine.shape()));
  }
  const std::int64_t m = cosine.dim(0);
  Tensor target = Tensor::eye(m);
  Tensor weights = Tensor::full({m, m}, lambda_offdiag);
  {
    auto w = weights.mutable_values();
    for (std::int64_t i = 0; i < m; ++i) w[static_cast<std::size_t>(i * m + i)] = 1.0f;
  }
  return weighted_squared_deviation(cosine, target, weights);
}

std::vector<Tensor> bbt_loss_terms(const std::vector<Tensor>& projector_outputs,
                                   const std::vector<Tensor>& predictor_outputs,
                                   const BBTConfig& cfg) {
  if (projector_outputs.empty()) {
    throw ContractError("bbt_loss: need at least one projector (K == 0)");
  }
  if (projector_outputs.size() != predictor_outputs.size()) {
    throw ShapeError("bbt_loss: " + std::to_string(projector_outputs.size()) +
                     " projector outputs vs " + std::to_string(predictor_outputs.size()) +
                     " predictor outputs");
  }
  std::vector<Tensor> terms;
  terms.reserve(projector_outputs.size());
  for (std::size_t k = 0; k < projector_outputs.size(); ++k) {
    if (projector_outputs[k].shape() != predictor_outputs[k].shape()) {
      throw ShapeError("bbt_loss: shape mismatch at projector k=" + std::to_string(k) + ": " +
                       shape_to_string(projector_outputs[k].shape()) + " vs " +
                       shape_to_string(predictor_outputs[k].shape()));
    }
    Tensor c = cosine_matrix(projector_outputs[k], predictor_outputs[k], cfg.eps);
    terms.push_back(bbt_penalty(c, cfg.lambda_offdiag));
  }
  return terms;
}

Tensor bbt_loss(const std::vector<Tensor>& projector_outputs,
                const std::vector<Tensor>& predictor_outputs, const BBTConfig& cfg) {
  auto terms = bbt_loss_terms(projector_outputs, predictor_outputs, cfg);
  Tensor total = add_n(terms);
  if (cfg.mean_reduction) {
    const auto k = static_cast<float>(terms.size());
    const auto m = static_cast<float>(projector_outputs.front().dim(0));
    total = scale(total, 1.0f / (k * m));
  }
  return total;
}

}  // namespace lfr
