#include "support/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

Mat Mat::from_tensor(const lfr::Tensor& t) {
  Mat m;
  if (t.rank() == 2) {
    m.rows = t.dim(0);
    m.cols = t.dim(1);
  } else if (t.rank() == 1) {
    m.rows = 1;
    m.cols = t.dim(0);
  } else {
    m.rows = 1;
    m.cols = t.numel();
  }
  m.v.assign(t.values().begin(), t.values().end());
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::int64_t i = 0; i < a.rows; ++i) {
    for (std::int64_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::int64_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  }
  return c;
}

Mat relu(const Mat& a) {
  Mat c = a;
  for (auto& x : c.v) x = x > 0.0 ? x : 0.0;
  return c;
}

Mat add_rowvec(const Mat& a, const std::vector<double>& bias) {
  Mat c = a;
  for (std::int64_t i = 0; i < c.rows; ++i)
    for (std::int64_t j = 0; j < c.cols; ++j) c.at(i, j) += bias[static_cast<std::size_t>(j)];
  return c;
}

Mat row_l2_normalize(const Mat& a, double eps) {
  Mat c = a;
  for (std::int64_t i = 0; i < c.rows; ++i) {
    double norm2 = 0.0;
    for (std::int64_t j = 0; j < c.cols; ++j) norm2 += c.at(i, j) * c.at(i, j);
    const double div = std::max(std::sqrt(norm2), eps);
    for (std::int64_t j = 0; j < c.cols; ++j) c.at(i, j) /= div;
  }
  return c;
}

Mat cosine_matrix(const Mat& y, const Mat& yhat, double eps) {
  const Mat u = row_l2_normalize(y, eps);
  const Mat v = row_l2_normalize(yhat, eps);
  Mat c(y.rows, y.rows);
  for (std::int64_t i = 0; i < y.rows; ++i)
    for (std::int64_t j = 0; j < y.rows; ++j) {
      double s = 0.0;
      for (std::int64_t t = 0; t < y.cols; ++t) s += u.at(i, t) * v.at(j, t);
      c.at(i, j) = s;
    }
  return c;
}

double bbt_penalty(const Mat& cosine, double lambda) {
  double loss = 0.0;
  for (std::int64_t i = 0; i < cosine.rows; ++i) {
    for (std::int64_t j = 0; j < cosine.cols; ++j) {
      if (i == j) {
        const double d = 1.0 - cosine.at(i, j);
        loss += d * d;
      } else {
        loss += lambda * cosine.at(i, j) * cosine.at(i, j);
      }
    }
  }
  return loss;
}

double bbt_loss(const std::vector<Mat>& y, const std::vector<Mat>& yhat, double lambda,
                double eps) {
  double loss = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    loss += bbt_penalty(cosine_matrix(y[k], yhat[k], eps), lambda);
  }
  return loss;
}

RefNet RefNet::from_mlp(const lfr::Mlp& mlp) {
  RefNet net;
  for (const auto& layer : mlp.layers()) {
    Layer ref;
    ref.weight = Mat::from_tensor(layer.weight);
    const auto b = layer.bias.values();
    ref.bias.assign(b.begin(), b.end());
    ref.relu = layer.act == lfr::Activation::relu;
    net.layers.push_back(std::move(ref));
  }
  return net;
}

Mat RefNet::forward(const Mat& x) const {
  Mat h = x;
  for (const auto& layer : layers) {
    h = add_rowvec(matmul(h, layer.weight), layer.bias);
    if (layer.relu) h = relu(h);
  }
  return h;
}

double RefNet::min_relu_preactivation(const Mat& x) const {
  double min_abs = std::numeric_limits<double>::infinity();
  Mat h = x;
  for (const auto& layer : layers) {
    h = add_rowvec(matmul(h, layer.weight), layer.bias);
    if (layer.relu) {
      for (double v : h.v) min_abs = std::min(min_abs, std::abs(v));
      h = relu(h);
    }
  }
  return min_abs;
}

std::vector<double> fd_gradient(std::vector<double>& values, const std::function<double()>& f,
                                double h) {
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double fp = f();
    values[i] = saved - h;
    const double fm = f();
    values[i] = saved;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_rel_err(std::span<const float> analytic, const std::vector<double>& reference,
                   double floor) {
  double ref_max = floor;
  for (double r : reference) ref_max = std::max(ref_max, std::abs(r));
  double worst = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(analytic[i]) - reference[i]) / ref_max);
  }
  return worst;
}

}  // namespace oracle
