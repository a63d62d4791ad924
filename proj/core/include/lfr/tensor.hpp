#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lfr/errors.hpp"

namespace lfr {

using Shape = std::vector<std::int64_t>;

std::string shape_to_string(const Shape& s);
std::int64_t shape_numel(const Shape& s);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;     // allocated lazily, zero-filled
  bool requires_grad = false;  // leaf flag: accumulate & keep gradient
  bool needs_grad = false;     // true if this node is on a gradient path

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  void ensure_grad();
  void accumulate_grad(std::span<const float> g);
};

using ImplPtr = std::shared_ptr<TensorImpl>;

}  // namespace detail

/// Dense row-major float32 tensor participating in reverse-mode autodiff.
///
/// Copying a Tensor is cheap and shares storage. Values are immutable once
/// the tensor has been consumed by an op on the active tape; gradients
/// accumulate into `grad()`. Parameter updates mutate values in place
/// between tapes via `mutable_values()`.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  /// Square identity matrix.
  static Tensor eye(std::int64_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::int64_t rank() const { return static_cast<std::int64_t>(impl_->shape.size()); }
  std::int64_t numel() const { return impl_->numel(); }

  std::span<const float> values() const { return impl_->values; }
  std::span<float> mutable_values() { return impl_->values; }
  float at(std::int64_t r, std::int64_t c) const;
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v);
  /// Gradient, zero-filled if never touched by backward.
  std::span<const float> grad() const;
  void zero_grad();

  /// True when two tensors share storage.
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  detail::ImplPtr impl() const { return impl_; }
  explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

 private:
  detail::ImplPtr impl_;
};

/// Dynamic (define-by-run) gradient tape. One tape per thread at a time;
/// ops record themselves onto the active tape when any input needs grad.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* current();

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  void clear();

  struct Node {
    detail::ImplPtr output;
    std::function<void()> backward;
  };
  void record(Node node) { nodes_.push_back(std::move(node)); }

  /// Reverse sweep from `loss` (must be scalar, produced under this tape).
  /// Clears the tape afterwards.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
};

/// RAII: makes `tape` the active tape for the current thread.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

/// RAII: suspends recording (forwards run, nothing lands on the tape).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// Backward through the active tape. Contract: `loss` is scalar and the
/// active tape is non-empty (a second backward without a new forward throws).
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. All differentiable; [m x n] row-major.
// ---------------------------------------------------------------------------

enum class MatmulAccum {
  f32,  // float accumulation (layer affine maps)
  f64   // double accumulation (cosine Gram and other reductions)
};

/// C[m x n] = A[m x p] * B[p x n]. Backward: dA = dC*B^T, dB = A^T*dC.
Tensor matmul(const Tensor& a, const Tensor& b, MatmulAccum accum = MatmulAccum::f32);

Tensor transpose(const Tensor& a);

/// Elementwise max(0, x). Subgradient at 0 is 0.
Tensor relu(const Tensor& a);

/// Same-shape elementwise sum.
Tensor add(const Tensor& a, const Tensor& b);

/// [m x n] + [n], the bias-broadcast add.
Tensor add_rowvec(const Tensor& a, const Tensor& bias);

/// Sum of scalar tensors with float64 accumulation.
Tensor add_n(const std::vector<Tensor>& terms);

Tensor scale(const Tensor& a, float alpha);

/// Sum of all entries (float64 accumulation) -> scalar.
Tensor sum(const Tensor& a);

/// Each row divided by max(||row||_2, eps); float64 norm accumulation.
Tensor row_l2_normalize(const Tensor& a, float eps = 1e-12f);

/// Scalar = sum_ij weights_ij * (a_ij - target_ij)^2, float64 accumulation.
/// target and weights are constants (no gradient flows into them).
Tensor weighted_squared_deviation(const Tensor& a, const Tensor& target, const Tensor& weights);

// ---------------------------------------------------------------------------
// Non-differentiating helpers (leaf construction / inspection).
// ---------------------------------------------------------------------------

/// New leaf tensor whose rows are `a`'s rows at `indices`.
Tensor take_rows(const Tensor& a, std::span<const std::int64_t> indices);

bool all_finite(const Tensor& a);

/// FNV-1a digest over the raw float bytes of `t`'s values.
std::uint64_t tensor_digest(const Tensor& t);
std::uint64_t tensors_digest(std::span<const Tensor> ts);

// Low-level deterministic kernels (row-decomposable: row i of the output
// depends only on row i of A, so results are bitwise batch-independent).
namespace kernels {
void gemm_f32(const float* a, const float* b, float* c, std::int64_t m, std::int64_t p,
              std::int64_t n);
void gemm_f64acc(const float* a, const float* b, float* c, std::int64_t m, std::int64_t p,
                 std::int64_t n);
/// dA[m x p] += G[m x n] * B[p x n]^T   (rows of G dotted with rows of B)
void gemm_abt_accum(const float* g, const float* b, float* da, std::int64_t m, std::int64_t p,
                    std::int64_t n);
/// dB[p x n] += A[m x p]^T * G[m x n]
void gemm_atb_accum(const float* a, const float* g, float* db, std::int64_t m, std::int64_t p,
                    std::int64_t n);
float dot_f32(const float* x, const float* y, std::int64_t n);
double dot_f64(const float* x, const float* y, std::int64_t n);
}  // namespace kernels

}  // namespace lfr
