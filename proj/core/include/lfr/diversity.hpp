#pragma once

#include <cstdint>
#include <vector>

#include "lfr/nn.hpp"
#include "lfr/tensor.hpp"

namespace lfr {

/// Behavioral fingerprint of a projector on a probe batch: the unit-norm
/// flattening of the m x m cosine Gram of its row-normalized outputs.
struct ProjectorSignature {
  std::vector<double> vector;  // length m^2, ||vector||_2 == 1
  int projector_index = -1;
  std::uint64_t probe_batch_hash = 0;
};

struct SelectionResult {
  std::vector<int> chosen_indices;  // ascending projector indices
  double log_det = 0.0;             // log |det(B)|; -inf when singular-filled
  int candidate_count = 0;
  bool singular_fill = false;
};

/// Signature of `projector` with respect to `probe_batch` [m x d_in], m >= 2.
/// Throws DegenerateSignatureError when the projector output is identically
/// zero on the whole batch (the Gram carries no information).
ProjectorSignature compute_signature(const ProjectorModel& projector, const Tensor& probe_batch,
                                     double eps = 1e-12);

/// Greedy MAP subset selection maximizing |det(B)|, B the Gram matrix of the
/// chosen signatures. Incremental orthogonal-residual updates, O(N*K*m^2).
/// Ties break toward the lowest projector_index. If every remaining candidate
/// would make B numerically singular (residual norm < 1e-10), the remaining
/// slots fill with the lowest unchosen indices and log_det is -inf.
SelectionResult select_diverse(const std::vector<ProjectorSignature>& signatures, int k);

/// Exact argmax |det(B)| by enumerating all K-subsets; test oracle.
/// Requires C(N, K) <= 10^6.
SelectionResult exhaustive_select(const std::vector<ProjectorSignature>& signatures, int k);

/// log |det| of the Gram matrix of the signatures at `positions`
/// (positions index into `signatures`, not projector_index).
double subset_log_abs_det(const std::vector<ProjectorSignature>& signatures,
                          const std::vector<int>& positions);

/// Pairwise cosine (= dot, signatures are unit norm) matrix of the signatures.
std::vector<std::vector<double>> signature_cosines(
    const std::vector<ProjectorSignature>& signatures);

}  // namespace lfr
