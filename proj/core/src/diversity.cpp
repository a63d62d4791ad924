#include "lfr/diversity.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

constexpr double kSingularResidual = 1e-10;  // residual norm below this = singular

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// |det| of the Gram matrix of the given signatures via LU with partial
/// pivoting; returns log|det| (-inf for a singular matrix).
double gram_log_abs_det(const std::vector<ProjectorSignature>& sigs,
                        const std::vector<int>& positions) {
  const int k = static_cast<int>(positions.size());
  std::vector<double> g(static_cast<std::size_t>(k) * k);
  for (int i = 0; i < k; ++i) {
    for (int j = i; j < k; ++j) {
      const double v = dot(sigs[static_cast<std::size_t>(positions[i])].vector,
                           sigs[static_cast<std::size_t>(positions[j])].vector);
      g[static_cast<std::size_t>(i * k + j)] = v;
      g[static_cast<std::size_t>(j * k + i)] = v;
    }
  }
  double log_det = 0.0;
  for (int col = 0; col < k; ++col) {
    int pivot = col;
    double best = std::abs(g[static_cast<std::size_t>(col * k + col)]);
    for (int r = col + 1; r < k; ++r) {
      const double v = std::abs(g[static_cast<std::size_t>(r * k + col)]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best == 0.0) return -std::numeric_limits<double>::infinity();
    if (pivot != col) {
      for (int c = 0; c < k; ++c)
        std::swap(g[static_cast<std::size_t>(col * k + c)], g[static_cast<std::size_t>(pivot * k + c)]);
    }
    const double d = g[static_cast<std::size_t>(col * k + col)];
    log_det += std::log(std::abs(d));
    for (int r = col + 1; r < k; ++r) {
      const double f = g[static_cast<std::size_t>(r * k + col)] / d;
      if (f == 0.0) continue;
      for (int c = col; c < k; ++c)
        g[static_cast<std::size_t>(r * k + c)] -= f * g[static_cast<std::size_t>(col * k + c)];
    }
  }
  return log_det;
}

}  // namespace

ProjectorSignature compute_signature(const ProjectorModel& projector, const Tensor& probe_batch,
                                     double eps) {
  if (probe_batch.rank() != 2 || probe_batch.dim(0) < 2) {
    throw ContractError("compute_signature: probe batch must be [m x d] with m >= 2");
  }
  Tensor out;
  {
    NoGradScope ng;
    out = projector.forward(probe_batch);
  }
  const std::int64_t m = out.dim(0), d = out.dim(1);
  auto src = out.values();

  // Row-normalize in float64, then form the m x m cosine Gram.
  std::vector<double> rows(static_cast<std::size_t>(m) * static_cast<std::size_t>(d));
  for (std::int64_t i = 0; i < m; ++i) {
    double norm2 = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double v = src[static_cast<std::size_t>(i * d + j)];
      norm2 += v * v;
    }
    const double div = std::max(std::sqrt(norm2), eps);
    for (std::int64_t j = 0; j < d; ++j)
      rows[static_cast<std::size_t>(i * d + j)] = src[static_cast<std::size_t>(i * d + j)] / div;
  }

  ProjectorSignature sig;
  sig.vector.resize(static_cast<std::size_t>(m) * static_cast<std::size_t>(m));
  double flat_norm2 = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double s = 0.0;
      const double* ri = rows.data() + i * d;
      const double* rj = rows.data() + j * d;
      for (std::int64_t t = 0; t < d; ++t) s += ri[t] * rj[t];
      sig.vector[static_cast<std::size_t>(i * m + j)] = s;
      flat_norm2 += s * s;
    }
  }
  const double flat_norm = std::sqrt(flat_norm2);
  if (flat_norm < eps) {
    throw DegenerateSignatureError(
        "projector emitted an all-zero output on the probe batch; signature undefined");
  }
  for (auto& v : sig.vector) v /= flat_norm;
  sig.probe_batch_hash =
      fnv1a64(probe_batch.values().data(), probe_batch.values().size() * sizeof(float));
  return sig;
}

SelectionResult select_diverse(const std::vector<ProjectorSignature>& signatures, int k) {
  const int n = static_cast<int>(signatures.size());
  if (k < 1 || k > n) {
    throw ContractError("select_diverse: need 1 <= K <= N, got K=" + std::to_string(k) +
                        ", N=" + std::to_string(n));
  }
  SelectionResult result;
  result.candidate_count = n;

  // Fast greedy MAP: track each candidate's coefficients against the
  // orthonormal basis of the chosen set; d2 is the squared residual norm,
  // and det grows by exactly d2 of the candidate added.
  //
  // Signatures are unit norm by contract, so the first-step residual is
  // exactly 1 for every candidate; seeding d2 from the rounded self-dot
  // would break the documented lowest-index tie-break by one ulp.
  std::vector<std::vector<double>> coeff(static_cast<std::size_t>(n));
  std::vector<double> d2(static_cast<std::size_t>(n), 1.0);
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const double self = dot(signatures[static_cast<std::size_t>(i)].vector,
                            signatures[static_cast<std::size_t>(i)].vector);
    if (std::abs(self - 1.0) > 1e-5) {
      throw ContractError("select_diverse: signature " + std::to_string(i) +
                          " is not unit norm (|a|^2 = " + std::to_string(self) + ")");
    }
  }

  double log_det = 0.0;
  int picked = 0;
  while (picked < k) {
    int best = -1;
    for (int i = 0; i < n; ++i) {
      if (chosen[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || d2[static_cast<std::size_t>(i)] > d2[static_cast<std::size_t>(best)] ||
          (d2[static_cast<std::size_t>(i)] == d2[static_cast<std::size_t>(best)] &&
           signatures[static_cast<std::size_t>(i)].projector_index <
               signatures[static_cast<std::size_t>(best)].projector_index)) {
        best = i;
      }
    }
    const double best_d2 = std::max(d2[static_cast<std::size_t>(best)], 0.0);
    if (std::sqrt(best_d2) < kSingularResidual) {
      // Everything left is in the span of the chosen set: fill by lowest
      // index and flag the determinant as zero.
      result.singular_fill = true;
      for (int i = 0; i < n && picked < k; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) {
          chosen[static_cast<std::size_t>(i)] = 1;
          result.chosen_indices.push_back(signatures[static_cast<std::size_t>(i)].projector_index);
          ++picked;
        }
      }
      log_det = -std::numeric_limits<double>::infinity();
      break;
    }

    chosen[static_cast<std::size_t>(best)] = 1;
    result.chosen_indices.push_back(signatures[static_cast<std::size_t>(best)].projector_index);
    ++picked;
    log_det += std::log(best_d2);
    if (picked == k) break;

    const double denom = std::sqrt(best_d2);
    for (int i = 0; i < n; ++i) {
      if (chosen[static_cast<std::size_t>(i)]) continue;
      double e = dot(signatures[static_cast<std::size_t>(i)].vector,
                     signatures[static_cast<std::size_t>(best)].vector);
      e -= dot(coeff[static_cast<std::size_t>(i)], coeff[static_cast<std::size_t>(best)]);
      e /= denom;
      coeff[static_cast<std::size_t>(i)].push_back(e);
      d2[static_cast<std::size_t>(i)] -= e * e;
    }
    coeff[static_cast<std::size_t>(best)].push_back(denom);  // keeps coeff dot products aligned
  }

  result.log_det = log_det;
  std::sort(result.chosen_indices.begin(), result.chosen_indices.end());
  return result;
}

SelectionResult exhaustive_select(const std::vector<ProjectorSignature>& signatures, int k) {
  const int n = static_cast<int>(signatures.size());
  if (k < 1 || k > n) {
    throw ContractError("exhaustive_select: need 1 <= K <= N");
  }
  // Budget guard: C(N, K) <= 1e6.
  double combos = 1.0;
  for (int i = 0; i < k; ++i) combos = combos * (n - i) / (i + 1);
  if (combos > 1e6) {
    throw ContractError("exhaustive_select: C(N, K) exceeds the 1e6 budget");
  }

  std::vector<int> positions(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) positions[static_cast<std::size_t>(i)] = i;

  SelectionResult best;
  best.candidate_count = n;
  best.log_det = -std::numeric_limits<double>::infinity();
  bool have_best = false;

  while (true) {
    const double ld = gram_log_abs_det(signatures, positions);
    if (!have_best || ld > best.log_det) {
      have_best = true;
      best.log_det = ld;
      best.chosen_indices.clear();
      for (int p : positions)
        best.chosen_indices.push_back(signatures[static_cast<std::size_t>(p)].projector_index);
    }
    // next lexicographic combination
    int i = k - 1;
    while (i >= 0 && positions[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++positions[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      positions[static_cast<std::size_t>(j)] = positions[static_cast<std::size_t>(j - 1)] + 1;
  }
  std::sort(best.chosen_indices.begin(), best.chosen_indices.end());
  return best;
}

double subset_log_abs_det(const std::vector<ProjectorSignature>& signatures,
                          const std::vector<int>& positions) {
  return gram_log_abs_det(signatures, positions);
}

std::vector<std::vector<double>> signature_cosines(
    const std::vector<ProjectorSignature>& signatures) {
  const std::size_t n = signatures.size();
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i][j] = dot(signatures[i].vector, signatures[j].vector);
  return out;
}

}  // namespace lfr
