#include "lfr/eval.hpp"

#include <algorithm>
#include <cmath>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

/// Largest eigenvalue of X^T X / n by power iteration (f64, fixed start).
double spectral_bound(const std::vector<double>& x, std::int64_t n, std::int64_t d) {
  std::vector<double> v(static_cast<std::size_t>(d), 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> xv(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(d));
  double lambda = 0.0;
  for (int iter = 0; iter < 50; ++iter) {
    for (std::int64_t i = 0; i < n; ++i) {
      const double* row = x.data() + i * d;
      double s = 0.0;
      for (std::int64_t j = 0; j < d; ++j) s += row[j] * v[static_cast<std::size_t>(j)];
      xv[static_cast<std::size_t>(i)] = s;
    }
    std::ranges::fill(w, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      const double* row = x.data() + i * d;
      const double a = xv[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < d; ++j) w[static_cast<std::size_t>(j)] += a * row[j];
    }
    double norm = 0.0;
    for (auto& wi : w) {
      wi /= static_cast<double>(n);
      norm += wi * wi;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (std::int64_t j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(j)] / norm;
  }
  return lambda;
}

}  // namespace

std::vector<std::int32_t> ProbeModel::predict(const Tensor& embeddings) const {
  const std::int64_t n = embeddings.dim(0);
  const std::int64_t d = embeddings.dim(1);
  const std::int64_t c = weight.dim(1);
  if (d != weight.dim(0)) {
    throw ShapeError("probe predict: embedding dim " + std::to_string(d) +
                     " does not match probe weight " + shape_to_string(weight.shape()));
  }
  std::vector<std::int32_t> out(static_cast<std::size_t>(n));
  auto x = embeddings.values();
  auto w = weight.values();
  auto b = bias.values();
  for (std::int64_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    std::int32_t best_c = 0;
    for (std::int64_t j = 0; j < c; ++j) {
      double logit = b[static_cast<std::size_t>(j)];
      for (std::int64_t t = 0; t < d; ++t)
        logit += static_cast<double>(x[static_cast<std::size_t>(i * d + t)]) *
                 w[static_cast<std::size_t>(t * c + j)];
      if (logit > best) {  // strict: ties keep the lowest class index
        best = logit;
        best_c = static_cast<std::int32_t>(j);
      }
    }
    out[static_cast<std::size_t>(i)] = best_c;
  }
  return out;
}

Tensor embed_dataset(const EncoderModel& encoder, const Dataset& ds, std::int64_t chunk) {
  if (ds.dim() != encoder.net.input_dim()) {
    throw ShapeError("embed_dataset: dataset dim " + std::to_string(ds.dim()) +
                     " vs encoder input dim " + std::to_string(encoder.net.input_dim()));
  }
  const std::int64_t n = ds.size();
  const std::int64_t latent = encoder.net.output_dim();
  Tensor out = Tensor::zeros({n, latent});
  auto dst = out.mutable_values();
  NoGradScope ng;
  std::vector<std::int64_t> idx;
  for (std::int64_t begin = 0; begin < n; begin += chunk) {
    const std::int64_t end = std::min(begin + chunk, n);
    idx.resize(static_cast<std::size_t>(end - begin));
    for (std::int64_t i = begin; i < end; ++i) idx[static_cast<std::size_t>(i - begin)] = i;
    Tensor z = encoder.forward(take_rows(ds.features, idx));
    std::copy(z.values().begin(), z.values().end(),
              dst.begin() + static_cast<std::ptrdiff_t>(begin * latent));
  }
  return out;
}

ProbeModel train_probe(const Tensor& embeddings, std::span<const std::int32_t> labels, int classes,
                       const ProbeConfig& cfg, std::uint64_t seed) {
  const std::int64_t n = embeddings.dim(0);
  const std::int64_t d = embeddings.dim(1);
  if (classes < 2) throw DataError("train_probe: need at least 2 classes");
  if (n < classes) throw DataError("train_probe: fewer rows than classes");
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw ShapeError("train_probe: label count does not match embedding rows");
  }
  {
    std::vector<char> seen(static_cast<std::size_t>(classes), 0);
    int distinct = 0;
    for (auto y : labels) {
      if (y < 0 || y >= classes) throw DataError("train_probe: label out of range");
      if (!seen[static_cast<std::size_t>(y)]) {
        seen[static_cast<std::size_t>(y)] = 1;
        ++distinct;
      }
    }
    if (distinct < 2) throw DataError("train_probe: training labels contain a single class");
  }

  // All solver state in float64. The solver standardizes each dimension
  // (train statistics, folded back into the returned weights afterwards):
  // raw representations can have a dominant constant direction that makes
  // plain gradient descent arbitrarily slow.
  std::vector<double> x(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
  std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
  std::vector<double> sigma(static_cast<std::size_t>(d), 1.0);
  {
    auto src = embeddings.values();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < d; ++j)
        mu[static_cast<std::size_t>(j)] += static_cast<double>(src[static_cast<std::size_t>(i * d + j)]);
    for (auto& m : mu) m /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < d; ++j) {
        x[static_cast<std::size_t>(i * d + j)] =
            static_cast<double>(src[static_cast<std::size_t>(i * d + j)]) -
            mu[static_cast<std::size_t>(j)];
      }
    for (std::int64_t j = 0; j < d; ++j) {
      double sq = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double v = x[static_cast<std::size_t>(i * d + j)];
        sq += v * v;
      }
      const double sd = std::sqrt(sq / static_cast<double>(n));
      sigma[static_cast<std::size_t>(j)] = sd > 1e-12 ? sd : 1.0;
    }
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < d; ++j)
        x[static_cast<std::size_t>(i * d + j)] /= sigma[static_cast<std::size_t>(j)];
  }

  // Weights live transposed ([class][dim]) while solving so logits and
  // gradient updates are contiguous dots/axpys over the embedding axis.
  const std::int64_t c = classes;
  std::vector<double> w(static_cast<std::size_t>(c) * static_cast<std::size_t>(d));
  std::vector<double> b(static_cast<std::size_t>(c), 0.0);
  CounterRng rng = CounterRng::from_seed(seed, "probe_init");
  for (std::int64_t t = 0; t < d; ++t)
    for (std::int64_t j = 0; j < c; ++j)
      w[static_cast<std::size_t>(j * d + t)] = static_cast<double>(rng.uniform(-0.01f, 0.01f));

  // Step size from the softmax curvature bound; the +1 accounts for the
  // intercept column of the augmented design matrix.
  const double lambda_max = spectral_bound(x, n, d) + 1.0;
  const double lr = 1.0 / (0.5 * lambda_max + cfg.l2 + 1e-12);

  std::vector<double> logits(static_cast<std::size_t>(c));
  std::vector<double> gw(w.size());
  std::vector<double> gb(b.size());

  auto dot = [d](const double* row, const double* wj) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::int64_t t = 0;
    for (; t + 4 <= d; t += 4) {
      s0 += row[t] * wj[t];
      s1 += row[t + 1] * wj[t + 1];
      s2 += row[t + 2] * wj[t + 2];
      s3 += row[t + 3] * wj[t + 3];
    }
    double tail = 0;
    for (; t < d; ++t) tail += row[t] * wj[t];
    return ((s0 + s2) + (s1 + s3)) + tail;
  };

  ProbeModel probe;
  double grad_norm = 0.0;
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    std::ranges::fill(gw, 0.0);
    std::ranges::fill(gb, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      const double* row = x.data() + i * d;
      double maxlogit = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < c; ++j) {
        const double s = b[static_cast<std::size_t>(j)] + dot(row, w.data() + j * d);
        logits[static_cast<std::size_t>(j)] = s;
        maxlogit = std::max(maxlogit, s);
      }
      double z = 0.0;
      for (std::int64_t j = 0; j < c; ++j) {
        logits[static_cast<std::size_t>(j)] = std::exp(logits[static_cast<std::size_t>(j)] - maxlogit);
        z += logits[static_cast<std::size_t>(j)];
      }
      const auto yi = labels[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < c; ++j) {
        const double p = logits[static_cast<std::size_t>(j)] / z;
        const double r = p - (j == yi ? 1.0 : 0.0);
        gb[static_cast<std::size_t>(j)] += r;
        double* gwj = gw.data() + j * d;
        for (std::int64_t t = 0; t < d; ++t) gwj[t] += r * row[t];
      }
    }
    grad_norm = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < gw.size(); ++i) {
      gw[i] = gw[i] * inv_n + cfg.l2 * w[i];
      grad_norm += gw[i] * gw[i];
    }
    for (std::size_t j = 0; j < gb.size(); ++j) {
      gb[j] *= inv_n;
      grad_norm += gb[j] * gb[j];
    }
    grad_norm = std::sqrt(grad_norm);
    if (grad_norm < cfg.tol) break;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
    for (std::size_t j = 0; j < b.size(); ++j) b[j] -= lr * gb[j];
  }

  // Fold the standardization back so the returned model consumes raw
  // embeddings (weight returned in [dim x class] layout):
  // w_raw = w/sigma, b_raw = b - sum_j w_j mu_j / sigma_j.
  std::vector<float> wf(w.size());
  std::vector<double> fold(b);
  for (std::int64_t j = 0; j < d; ++j) {
    for (std::int64_t k = 0; k < c; ++k) {
      const double wraw =
          w[static_cast<std::size_t>(k * d + j)] / sigma[static_cast<std::size_t>(j)];
      wf[static_cast<std::size_t>(j * c + k)] = static_cast<float>(wraw);
      fold[static_cast<std::size_t>(k)] -= wraw * mu[static_cast<std::size_t>(j)];
    }
  }
  std::vector<float> bf(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) bf[j] = static_cast<float>(fold[j]);
  probe.weight = Tensor::from_data({d, c}, std::move(wf));
  probe.bias = Tensor::from_data({c}, std::move(bf));
  probe.iterations = iter;
  probe.final_grad_norm = grad_norm;
  return probe;
}

EvalReport evaluate(const EncoderModel& encoder, const Dataset& train, const Dataset& test,
                    const ProbeConfig& cfg, std::uint64_t seed, std::string encoder_source,
                    std::uint64_t checkpoint_digest) {
  if (test.size() == 0) throw DataError("evaluate: test split is empty");
  const int classes = static_cast<int>(train.classes());

  const std::uint64_t digest_before = params_digest(encoder.net);
  Tensor train_emb = embed_dataset(encoder, train);
  Tensor test_emb = embed_dataset(encoder, test);

  ProbeModel probe = train_probe(train_emb, train.labels, classes, cfg, seed);
  probe.encoder_digest = digest_before;

  auto preds = probe.predict(test_emb);
  std::vector<std::int64_t> correct(static_cast<std::size_t>(classes), 0);
  std::vector<std::int64_t> total(static_cast<std::size_t>(classes), 0);
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto y = test.labels[i];
    ++total[static_cast<std::size_t>(y)];
    if (preds[i] == y) {
      ++hits;
      ++correct[static_cast<std::size_t>(y)];
    }
  }

  if (params_digest(encoder.net) != digest_before) {
    throw ContractError("evaluate: encoder parameters changed during probing");
  }

  EvalReport report;
  report.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  report.per_class_accuracy.resize(static_cast<std::size_t>(classes), 0.0);
  for (int j = 0; j < classes; ++j) {
    report.per_class_accuracy[static_cast<std::size_t>(j)] =
        total[static_cast<std::size_t>(j)] > 0
            ? static_cast<double>(correct[static_cast<std::size_t>(j)]) /
                  static_cast<double>(total[static_cast<std::size_t>(j)])
            : 0.0;
  }
  report.n_train = train.size();
  report.n_test = test.size();
  report.seed = seed;
  report.encoder_source = std::move(encoder_source);
  report.checkpoint_digest = checkpoint_digest;
  return report;
}

}  // namespace lfr
