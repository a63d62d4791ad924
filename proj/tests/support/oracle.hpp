#pragma once

// Float64 reference implementations used as independent test oracles.
// Everything here recomputes the math with plain loops; nothing calls into
// the production tensor/tape path except to copy parameter values out.

#include <cstdint>
#include <functional>
#include <vector>

#include "lfr/nn.hpp"
#include "lfr/tensor.hpp"

namespace oracle {

struct Mat {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::int64_t r, std::int64_t c) : rows(r), cols(c), v(static_cast<std::size_t>(r * c), 0.0) {}

  double& at(std::int64_t r, std::int64_t c) { return v[static_cast<std::size_t>(r * cols + c)]; }
  double at(std::int64_t r, std::int64_t c) const {
    return v[static_cast<std::size_t>(r * cols + c)];
  }

  static Mat from_tensor(const lfr::Tensor& t);
};

Mat matmul(const Mat& a, const Mat& b);
Mat relu(const Mat& a);
Mat add_rowvec(const Mat& a, const std::vector<double>& bias);
Mat row_l2_normalize(const Mat& a, double eps);
Mat cosine_matrix(const Mat& y, const Mat& yhat, double eps);
double bbt_penalty(const Mat& cosine, double lambda);
double bbt_loss(const std::vector<Mat>& y, const std::vector<Mat>& yhat, double lambda, double eps);

/// Float64 mirror of an Mlp (weights copied out of the float32 model).
struct RefNet {
  struct Layer {
    Mat weight;
    std::vector<double> bias;
    bool relu = false;
  };
  std::vector<Layer> layers;

  static RefNet from_mlp(const lfr::Mlp& mlp);
  Mat forward(const Mat& x) const;
  /// Minimum |preactivation| feeding any ReLU; used as the kink guard.
  double min_relu_preactivation(const Mat& x) const;
};

/// Central finite differences d f / d value for every entry of `values`,
/// evaluated through `f` in float64 with step h.
std::vector<double> fd_gradient(std::vector<double>& values,
                                const std::function<double()>& f, double h = 1e-3);

/// max_i |analytic_i - reference_i| / max(max_i |reference_i|, floor).
double max_rel_err(std::span<const float> analytic, const std::vector<double>& reference,
                   double floor = 1e-8);

}  // namespace oracle
