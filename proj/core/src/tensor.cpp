#include "lfr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "lfr/rng.hpp"

namespace lfr {

std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace detail {

void TensorImpl::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0f);
}

void TensorImpl::accumulate_grad(std::span<const float> g) {
  ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values.assign(static_cast<std::size_t>(shape_numel(impl->shape)), 0.0f);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->ensure_grad();
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::ranges::fill(t.mutable_values(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("from_data: shape " + shape_to_string(shape) + " expects " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->ensure_grad();
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

Tensor Tensor::eye(std::int64_t n) {
  Tensor t = zeros({n, n});
  auto v = t.mutable_values();
  for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i * n + i)] = 1.0f;
  return t;
}

float Tensor::at(std::int64_t r, std::int64_t c) const {
  return impl_->values[static_cast<std::size_t>(r * impl_->shape.at(1) + c)];
}

float Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
  }
  return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool v) {
  impl_->requires_grad = v;
  if (v) impl_->ensure_grad();
  return *this;
}

std::span<const float> Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->ensure_grad();
  std::ranges::fill(impl_->grad, 0.0f);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {
thread_local GradTape* g_current_tape = nullptr;
thread_local bool g_recording = true;

bool input_needs_grad(const detail::ImplPtr& p) { return p->requires_grad || p->needs_grad; }
}  // namespace

GradTape* GradTape::current() { return g_current_tape; }

void GradTape::clear() { nodes_.clear(); }

void GradTape::backward(const Tensor& loss) {
  if (nodes_.empty()) {
    throw ContractError(
        "backward: tape is empty (second backward without a new forward, or no "
        "recorded ops)");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  auto impl = loss.impl();
  impl->ensure_grad();
  impl->grad[0] = 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no gradient reached this node
    it->backward();
  }
  clear();
}

TapeScope::TapeScope(GradTape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_recording) { g_recording = false; }
NoGradScope::~NoGradScope() { g_recording = previous_; }

bool grad_recording_enabled() { return g_recording && g_current_tape != nullptr; }

void backward(const Tensor& loss) {
  if (g_current_tape == nullptr) {
    throw ContractError("backward: no active GradTape in this thread");
  }
  g_current_tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace kernels {

// All kernels fix the accumulation order along the contraction axis, so a
// given output row is a pure function of the corresponding input row and the
// full second operand (bitwise batch independence). The `av == 0` skips are
// exact under the all-finite invariant: adding av*b with av == +/-0 never
// changes an accumulator that started from +0.

void gemm_f32(const float* a, const float* b, float* c, std::int64_t m, std::int64_t p,
              std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    std::fill(crow, crow + n, 0.0f);
    const float* arow = a + i * p;
    for (std::int64_t k = 0; k < p; ++k) {
      const float av = arow[k];
      if (av == 0.0f) continue;
      const float* brow = b + k * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_f64acc(const float* a, const float* b, float* c, std::int64_t m, std::int64_t p,
                 std::int64_t n) {
  std::vector<double> acc(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < m; ++i) {
    std::ranges::fill(acc, 0.0);
    const float* arow = a + i * p;
    for (std::int64_t k = 0; k < p; ++k) {
      const double av = static_cast<double>(arow[k]);
      if (av == 0.0) continue;
      const float* brow = b + k * n;
      for (std::int64_t j = 0; j < n; ++j) acc[static_cast<std::size_t>(j)] += av * brow[j];
    }
    float* crow = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[static_cast<std::size_t>(j)]);
  }
}

float dot_f32(const float* x, const float* y, std::int64_t n) {
  float s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  std::int64_t j = 0;
  for (; j + 8 <= n; j += 8) {
    s0 += x[j] * y[j];
    s1 += x[j + 1] * y[j + 1];
    s2 += x[j + 2] * y[j + 2];
    s3 += x[j + 3] * y[j + 3];
    s4 += x[j + 4] * y[j + 4];
    s5 += x[j + 5] * y[j + 5];
    s6 += x[j + 6] * y[j + 6];
    s7 += x[j + 7] * y[j + 7];
  }
  float tail = 0;
  for (; j < n; ++j) tail += x[j] * y[j];
  return (((s0 + s4) + (s1 + s5)) + ((s2 + s6) + (s3 + s7))) + tail;
}

double dot_f64(const float* x, const float* y, std::int64_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::int64_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += static_cast<double>(x[j]) * y[j];
    s1 += static_cast<double>(x[j + 1]) * y[j + 1];
    s2 += static_cast<double>(x[j + 2]) * y[j + 2];
    s3 += static_cast<double>(x[j + 3]) * y[j + 3];
  }
  double tail = 0;
  for (; j < n; ++j) tail += static_cast<double>(x[j]) * y[j];
  return ((s0 + s2) + (s1 + s3)) + tail;
}

void gemm_abt_accum(const float* g, const float* b, float* da, std::int64_t m, std::int64_t p,
                    std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const float* grow = g + i * n;
    float* darow = da + i * p;
    for (std::int64_t k = 0; k < p; ++k) darow[k] += dot_f32(grow, b + k * n, n);
  }
}

void gemm_atb_accum(const float* a, const float* g, float* db, std::int64_t m, std::int64_t p,
                    std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * p;
    const float* grow = g + i * n;
    for (std::int64_t k = 0; k < p; ++k) {
      const float av = arow[k];
      if (av == 0.0f) continue;
      float* dbrow = db + k * n;
      for (std::int64_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
    }
  }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Op helpers
// ---------------------------------------------------------------------------

namespace {

using detail::ImplPtr;

void maybe_record(const std::vector<ImplPtr>& inputs, const Tensor& out,
                  std::function<void()> backward_fn) {
  if (!grad_recording_enabled()) return;
  bool any = false;
  for (const auto& in : inputs) {
    if (input_needs_grad(in)) {
      any = true;
      break;
    }
  }
  if (!any) return;
  out.impl()->needs_grad = true;
  GradTape::current()->record({out.impl(), std::move(backward_fn)});
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got shape " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, MatmulAccum accum) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::int64_t m = a.dim(0), p = a.dim(1), n = b.dim(1);
  if (b.dim(0) != p) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  if (accum == MatmulAccum::f32) {
    kernels::gemm_f32(a.values().data(), b.values().data(), out.mutable_values().data(), m, p, n);
  } else {
    kernels::gemm_f64acc(a.values().data(), b.values().data(), out.mutable_values().data(), m, p,
                         n);
  }
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  maybe_record({ai, bi}, out, [ai, bi, oi, m, p, n]() {
    const float* g = oi->grad.data();
    if (input_needs_grad(ai)) {
      ai->ensure_grad();
      kernels::gemm_abt_accum(g, bi->values.data(), ai->grad.data(), m, p, n);
    }
    if (input_needs_grad(bi)) {
      bi->ensure_grad();
      kernels::gemm_atb_accum(ai->values.data(), g, bi->grad.data(), m, p, n);
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  {
    auto src = a.values();
    auto dst = out.mutable_values();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        dst[static_cast<std::size_t>(j * m + i)] = src[static_cast<std::size_t>(i * n + j)];
  }
  auto ai = a.impl(), oi = out.impl();
  maybe_record({ai}, out, [ai, oi, m, n]() {
    if (!input_needs_grad(ai)) return;
    ai->ensure_grad();
    const float* g = oi->grad.data();
    float* da = ai->grad.data();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
  });
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  {
    auto src = a.values();
    auto dst = out.mutable_values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
  }
  auto ai = a.impl(), oi = out.impl();
  maybe_record({ai}, out, [ai, oi]() {
    if (!input_needs_grad(ai)) return;
    ai->ensure_grad();
    const float* g = oi->grad.data();
    const float* x = ai->values.data();
    float* da = ai->grad.data();
    const std::size_t n = ai->values.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] > 0.0f) da[i] += g[i];
    }
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  {
    auto av = a.values();
    auto bv = b.values();
    auto dst = out.mutable_values();
    for (std::size_t i = 0; i < av.size(); ++i) dst[i] = av[i] + bv[i];
  }
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  maybe_record({ai, bi}, out, [ai, bi, oi]() {
    if (input_needs_grad(ai)) ai->accumulate_grad(oi->grad);
    if (input_needs_grad(bi)) bi->accumulate_grad(oi->grad);
  });
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  require_rank2(a, "add_rowvec");
  if (bias.rank() != 1 || bias.dim(0) != a.dim(1)) {
    throw ShapeError("add_rowvec: bias shape " + shape_to_string(bias.shape()) +
                     " does not match matrix " + shape_to_string(a.shape()));
  }
  const std::int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros(a.shape());
  {
    auto av = a.values();
    auto bv = bias.values();
    auto dst = out.mutable_values();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        dst[static_cast<std::size_t>(i * n + j)] =
            av[static_cast<std::size_t>(i * n + j)] + bv[static_cast<std::size_t>(j)];
  }
  auto ai = a.impl(), bi = bias.impl(), oi = out.impl();
  maybe_record({ai, bi}, out, [ai, bi, oi, m, n]() {
    const float* g = oi->grad.data();
    if (input_needs_grad(ai)) ai->accumulate_grad(oi->grad);
    if (input_needs_grad(bi)) {
      bi->ensure_grad();
      std::vector<double> col(static_cast<std::size_t>(n), 0.0);
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) col[static_cast<std::size_t>(j)] += g[i * n + j];
      for (std::int64_t j = 0; j < n; ++j)
        bi->grad[static_cast<std::size_t>(j)] += static_cast<float>(col[static_cast<std::size_t>(j)]);
    }
  });
  return out;
}

Tensor add_n(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ContractError("add_n: empty term list");
  double acc = 0.0;
  std::vector<ImplPtr> impls;
  impls.reserve(terms.size());
  for (const auto& t : terms) {
    if (t.numel() != 1) throw ShapeError("add_n: all terms must be scalars");
    acc += static_cast<double>(t.values()[0]);
    impls.push_back(t.impl());
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  auto oi = out.impl();
  maybe_record(impls, out, [impls, oi]() {
    const float g = oi->grad[0];
    for (const auto& in : impls) {
      if (!input_needs_grad(in)) continue;
      in->ensure_grad();
      in->grad[0] += g;
    }
  });
  return out;
}

Tensor scale(const Tensor& a, float alpha) {
  Tensor out = Tensor::zeros(a.shape());
  {
    auto av = a.values();
    auto dst = out.mutable_values();
    for (std::size_t i = 0; i < av.size(); ++i) dst[i] = av[i] * alpha;
  }
  auto ai = a.impl(), oi = out.impl();
  maybe_record({ai}, out, [ai, oi, alpha]() {
    if (!input_needs_grad(ai)) return;
    ai->ensure_grad();
    const float* g = oi->grad.data();
    float* da = ai->grad.data();
    for (std::size_t i = 0; i < ai->values.size(); ++i) da[i] += alpha * g[i];
  });
  return out;
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.values()) acc += static_cast<double>(v);
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  auto ai = a.impl(), oi = out.impl();
  maybe_record({ai}, out, [ai, oi]() {
    if (!input_needs_grad(ai)) return;
    ai->ensure_grad();
    const float g = oi->grad[0];
    for (std::size_t i = 0; i < ai->values.size(); ++i) ai->grad[i] += g;
  });
  return out;
}

Tensor row_l2_normalize(const Tensor& a, float eps) {
  require_rank2(a, "row_l2_normalize");
  if (!(eps > 0.0f)) throw ContractError("row_l2_normalize: eps must be > 0");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros(a.shape());
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
  {
    auto src = a.values();
    auto dst = out.mutable_values();
    for (std::int64_t i = 0; i < m; ++i) {
      const float* row = src.data() + i * n;
      double norm = std::sqrt(kernels::dot_f64(row, row, n));
      const double div = std::max(norm, static_cast<double>(eps));
      (*norms)[static_cast<std::size_t>(i)] = div;
      float* orow = dst.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) orow[j] = static_cast<float>(row[j] / div);
    }
  }
  auto ai = a.impl(), oi = out.impl();
  const double deps = static_cast<double>(eps);
  maybe_record({ai}, out, [ai, oi, norms, m, n, deps]() {
    if (!input_needs_grad(ai)) return;
    ai->ensure_grad();
    const float* g = oi->grad.data();
    const float* o = oi->values.data();
    float* da = ai->grad.data();
    for (std::int64_t i = 0; i < m; ++i) {
      const double div = (*norms)[static_cast<std::size_t>(i)];
      const float* grow = g + i * n;
      const float* orow = o + i * n;
      float* darow = da + i * n;
      if (div > deps) {
        // Row norm beat eps: unit-sphere map, project out the radial component.
        const double gdoto = kernels::dot_f64(grow, orow, n);
        for (std::int64_t j = 0; j < n; ++j)
          darow[j] += static_cast<float>((static_cast<double>(grow[j]) - gdoto * orow[j]) / div);
      } else {
        // Clamped at eps: the map is linear division by the constant eps.
        for (std::int64_t j = 0; j < n; ++j)
          darow[j] += static_cast<float>(static_cast<double>(grow[j]) / deps);
      }
    }
  });
  return out;
}

Tensor weighted_squared_deviation(const Tensor& a, const Tensor& target, const Tensor& weights) {
  if (a.shape() != target.shape() || a.shape() != weights.shape()) {
    throw ShapeError("weighted_squared_deviation: shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(target.shape()) + " vs " +
                     shape_to_string(weights.shape()));
  }
  double acc = 0.0;
  {
    auto av = a.values();
    auto tv = target.values();
    auto wv = weights.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = static_cast<double>(av[i]) - tv[i];
      acc += static_cast<double>(wv[i]) * d * d;
    }
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  auto ai = a.impl(), ti = target.impl(), wi = weights.impl(), oi = out.impl();
  maybe_record({ai}, out, [ai, ti, wi, oi]() {
    if (!input_needs_grad(ai)) return;
    ai->ensure_grad();
    const float g = oi->grad[0];
    const float* av = ai->values.data();
    const float* tv = ti->values.data();
    const float* wv = wi->values.data();
    float* da = ai->grad.data();
    for (std::size_t i = 0; i < ai->values.size(); ++i) {
      da[i] += g * 2.0f * wv[i] * (av[i] - tv[i]);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Non-differentiating helpers
// ---------------------------------------------------------------------------

Tensor take_rows(const Tensor& a, std::span<const std::int64_t> indices) {
  require_rank2(a, "take_rows");
  const std::int64_t n = a.dim(1);
  Tensor out = Tensor::zeros({static_cast<std::int64_t>(indices.size()), n});
  auto src = a.values();
  auto dst = out.mutable_values();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto i = indices[r];
    if (i < 0 || i >= a.dim(0)) throw ShapeError("take_rows: index out of range");
    std::memcpy(dst.data() + r * static_cast<std::size_t>(n),
                src.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n),
                static_cast<std::size_t>(n) * sizeof(float));
  }
  return out;
}

bool all_finite(const Tensor& a) {
  for (float v : a.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::uint64_t tensor_digest(const Tensor& t) {
  return fnv1a64(t.values().data(), t.values().size() * sizeof(float));
}

std::uint64_t tensors_digest(std::span<const Tensor> ts) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& t : ts) {
    h = fnv1a64(t.values().data(), t.values().size() * sizeof(float), h);
  }
  return h;
}

}  // namespace lfr
