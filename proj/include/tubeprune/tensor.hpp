#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tubeprune/rng.hpp"

namespace tubeprune {

using Shape = std::vector<std::size_t>;

namespace detail {

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

inline void require(bool cond, const char* msg) {
  if (!cond) fail(msg);
}

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized like values iff requires_grad
  bool requires_grad = false;
};

// C[m x n] = A[m x k] * B[k x n]; C pre-zeroed
inline void mm_nn(double* c, const double* a, const double* b, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// OUT[m x k] += G[m x n] * B[k x n]^T
inline void mm_nt_acc(double* out, const double* g, const double* b,
                      std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* orow = out + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      orow[kk] += s;
    }
  }
}

// OUT[k x n] += A[m x k]^T * G[m x n]
inline void mm_tn_acc(double* out, const double* a, const double* g,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* orow = out + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->values.assign(detail::shape_size(t.d_->shape), 0.0);
    t.d_->requires_grad = requires_grad;
    if (requires_grad) t.d_->grad.assign(t.d_->values.size(), 0.0);
    return t;
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : t.d_->values) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    detail::require(detail::shape_size(shape) == values.size(),
                    "Tensor::from: shape does not match value count");
    for (double v : values) {
      if (!std::isfinite(v))
        throw std::domain_error("Tensor::from: non-finite value");
    }
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    t.d_->requires_grad = requires_grad;
    if (requires_grad) t.d_->grad.assign(t.d_->values.size(), 0.0);
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : t.d_->values) x = stddev * rng.normal();
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }
  bool requires_grad() const { return d_ && d_->requires_grad; }

  std::size_t rows() const {
    detail::require(d_->shape.size() == 2, "rows(): tensor is not 2-D");
    return d_->shape[0];
  }
  std::size_t cols() const {
    detail::require(d_->shape.size() == 2, "cols(): tensor is not 2-D");
    return d_->shape[1];
  }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }

  std::vector<double>& grad() {
    detail::require(requires_grad(), "grad(): tensor has no gradient buffer");
    return d_->grad;
  }
  const std::vector<double>& grad() const {
    detail::require(requires_grad(), "grad(): tensor has no gradient buffer");
    return d_->grad;
  }

  void zero_grad() {
    if (requires_grad()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
  }

  double item() const {
    detail::require(size() == 1, "item(): tensor is not a scalar");
    return d_->values[0];
  }
  double at(std::size_t i) const { return d_->values.at(i); }
  double& at(std::size_t i) { return d_->values.at(i); }
  double at(std::size_t i, std::size_t j) const {
    return d_->values.at(i * cols() + j);
  }
  double& at(std::size_t i, std::size_t j) {
    return d_->values.at(i * cols() + j);
  }

  bool all_finite() const {
    for (double v : d_->values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::shared_ptr<detail::TensorData> ptr() const { return d_; }

 private:
  std::shared_ptr<detail::TensorData> d_;
};

// Reverse-mode tape. Ops append backward closures while a Tape is active;
// backward() replays them once, in reverse recording order, accumulating
// gradients additively across fan-out.
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  std::size_t op_count() const { return steps_.size(); }

  void clear() { steps_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape.
  void backward(const Tensor& loss) {
    detail::require(loss.size() == 1, "backward(): loss must be scalar");
    detail::require(loss.requires_grad(),
                    "backward(): loss does not require grad");
    loss.ptr()->grad[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  static Tape* active() { return active_slot(); }

  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active_slot()) { active_slot() = &t; }
    ~Scope() { active_slot() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  // Disables recording for the lifetime of the scope (eval-mode forwards).
  class SuspendScope {
   public:
    SuspendScope() : prev_(active_slot()) { active_slot() = nullptr; }
    ~SuspendScope() { active_slot() = prev_; }
    SuspendScope(const SuspendScope&) = delete;
    SuspendScope& operator=(const SuspendScope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  static Tape*& active_slot() {
    thread_local Tape* t = nullptr;
    return t;
  }
  std::vector<std::function<void()>> steps_;
};

namespace detail {

inline bool should_record(bool out_requires_grad) {
  return out_requires_grad && Tape::active() != nullptr;
}

using Payload = std::shared_ptr<TensorData>;

}  // namespace detail

// ---- elementwise ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), bd = b.ptr(), od = out.ptr(), n] {
      for (std::size_t i = 0; i < n; ++i) {
        if (ad->requires_grad) ad->grad[i] += od->grad[i];
        if (bd->requires_grad) bd->grad[i] += od->grad[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = c * a.values()[i];
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), c, n] {
      for (std::size_t i = 0; i < n; ++i) ad->grad[i] += c * od->grad[i];
    });
  }
  return out;
}

// ---- matrix ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.shape().size() == 2 && b.shape().size() == 2,
                  "matmul: operands must be 2-D");
  detail::require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n}, a.requires_grad() || b.requires_grad());
  detail::mm_nn(out.values().data(), a.values().data(), b.values().data(), m,
                k, n);
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), bd = b.ptr(), od = out.ptr(), m, k,
                            n] {
      if (ad->requires_grad)
        detail::mm_nt_acc(ad->grad.data(), od->grad.data(), bd->values.data(),
                          m, n, k);
      if (bd->requires_grad)
        detail::mm_tn_acc(bd->grad.data(), ad->values.data(), od->grad.data(),
                          m, k, n);
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  detail::require(a.shape().size() == 2, "transpose: tensor must be 2-D");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c, r}, a.requires_grad());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.values()[j * r + i] = a.values()[i * c + j];
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), r, c] {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          ad->grad[i * c + j] += od->grad[j * r + i];
    });
  }
  return out;
}

// ---- shape / indexing ----

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  detail::require(detail::shape_size(new_shape) == a.size(),
                  "reshape: element count mismatch");
  Tensor out = Tensor::zeros(std::move(new_shape), a.requires_grad());
  out.values() = a.values();
  if (detail::should_record(out.requires_grad())) {
    const std::size_t n = a.size();
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), n] {
      for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
    });
  }
  return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_rows: empty input");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    detail::require(p.cols() == c, "concat_rows: column mismatch");
    r += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({r, c}, rg);
  std::size_t row = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(),
              out.values().begin() + row * c);
    row += p.rows();
  }
  if (detail::should_record(rg)) {
    std::vector<detail::Payload> ps;
    ps.reserve(parts.size());
    for (const Tensor& p : parts) ps.push_back(p.ptr());
    Tape::active()->record([ps, od = out.ptr(), c] {
      std::size_t row = 0;
      for (const auto& p : ps) {
        const std::size_t pr = p->shape[0];
        if (p->requires_grad) {
          for (std::size_t i = 0; i < pr * c; ++i)
            p->grad[i] += od->grad[row * c + i];
        }
        row += pr;
      }
    });
  }
  return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_cols: empty input");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    detail::require(p.rows() == r, "concat_cols: row mismatch");
    c += p.cols();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({r, c}, rg);
  std::size_t col = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy(p.values().begin() + i * pc, p.values().begin() + (i + 1) * pc,
                out.values().begin() + i * c + col);
    col += pc;
  }
  if (detail::should_record(rg)) {
    std::vector<detail::Payload> ps;
    ps.reserve(parts.size());
    for (const Tensor& p : parts) ps.push_back(p.ptr());
    Tape::active()->record([ps, od = out.ptr(), r, c] {
      std::size_t col = 0;
      for (const auto& p : ps) {
        const std::size_t pc = p->shape[1];
        if (p->requires_grad) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              p->grad[i * pc + j] += od->grad[i * c + col + j];
        }
        col += pc;
      }
    });
  }
  return out;
}

inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
  detail::require(a.shape().size() == 2, "gather_rows: tensor must be 2-D");
  const std::size_t r = a.rows(), c = a.cols();
  for (std::size_t i : idx)
    detail::require(i < r, "gather_rows: index out of range");
  Tensor out = Tensor::zeros({idx.size(), c}, a.requires_grad());
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(a.values().begin() + idx[i] * c,
              a.values().begin() + (idx[i] + 1) * c,
              out.values().begin() + i * c);
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), idx, c] {
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j)
          ad->grad[idx[i] * c + j] += od->grad[i * c + j];
    });
  }
  return out;
}

inline Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  detail::require(a.shape().size() == 2, "slice_rows: tensor must be 2-D");
  detail::require(r0 < r1 && r1 <= a.rows(), "slice_rows: bad row range");
  const std::size_t c = a.cols(), h = r1 - r0;
  Tensor out = Tensor::zeros({h, c}, a.requires_grad());
  std::copy(a.values().begin() + r0 * c, a.values().begin() + r1 * c,
            out.values().begin());
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), r0, c, h] {
      for (std::size_t i = 0; i < h * c; ++i)
        ad->grad[r0 * c + i] += od->grad[i];
    });
  }
  return out;
}

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  detail::require(a.shape().size() == 2, "slice_cols: tensor must be 2-D");
  detail::require(c0 < c1 && c1 <= a.cols(), "slice_cols: bad column range");
  const std::size_t r = a.rows(), c = a.cols(), w = c1 - c0;
  Tensor out = Tensor::zeros({r, w}, a.requires_grad());
  for (std::size_t i = 0; i < r; ++i)
    std::copy(a.values().begin() + i * c + c0, a.values().begin() + i * c + c1,
              out.values().begin() + i * w);
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), r, c, c0, w] {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j)
          ad->grad[i * c + c0 + j] += od->grad[i * w + j];
    });
  }
  return out;
}

// out.values[i] = a.values[map[i]]; arbitrary selection/permutation
inline Tensor gather_flat(const Tensor& a, const std::vector<std::size_t>& map,
                          Shape out_shape) {
  detail::require(detail::shape_size(out_shape) == map.size(),
                  "gather_flat: map does not match output shape");
  for (std::size_t i : map)
    detail::require(i < a.size(), "gather_flat: index out of range");
  Tensor out = Tensor::zeros(std::move(out_shape), a.requires_grad());
  for (std::size_t i = 0; i < map.size(); ++i)
    out.values()[i] = a.values()[map[i]];
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), map] {
      for (std::size_t i = 0; i < map.size(); ++i)
        ad->grad[map[i]] += od->grad[i];
    });
  }
  return out;
}

// ---- reductions ----

inline Tensor mean_over_axis(const Tensor& a, std::size_t axis) {
  detail::require(a.shape().size() == 2, "mean_over_axis: tensor must be 2-D");
  detail::require(axis <= 1, "mean_over_axis: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  if (axis == 0) {
    Tensor out = Tensor::zeros({1, c}, a.requires_grad());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out.values()[j] += a.values()[i * c + j];
    for (std::size_t j = 0; j < c; ++j) out.values()[j] /= static_cast<double>(r);
    if (detail::should_record(out.requires_grad())) {
      Tape::active()->record([ad = a.ptr(), od = out.ptr(), r, c] {
        const double inv = 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            ad->grad[i * c + j] += inv * od->grad[j];
      });
    }
    return out;
  }
  Tensor out = Tensor::zeros({r, 1}, a.requires_grad());
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += a.values()[i * c + j];
    out.values()[i] = s / static_cast<double>(c);
  }
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), r, c] {
      const double inv = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          ad->grad[i * c + j] += inv * od->grad[i];
    });
  }
  return out;
}

// out = a / sum(a); requires a strictly positive total
inline Tensor normalize_sum(const Tensor& a) {
  const std::size_t n = a.size();
  double total = 0.0;
  for (double v : a.values()) total += v;
  if (!(total > 1e-300))
    throw std::domain_error("normalize_sum: non-positive total mass");
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] / total;
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ad = a.ptr(), od = out.ptr(), total, n] {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += od->grad[i] * od->values[i];
      for (std::size_t i = 0; i < n; ++i)
        ad->grad[i] += (od->grad[i] - dot) / total;
    });
  }
  return out;
}

// out[1 x D] = sum_i w[i] * x[i, :]
inline Tensor weighted_row_sum(const Tensor& x, const Tensor& w) {
  detail::require(x.shape().size() == 2, "weighted_row_sum: x must be 2-D");
  const std::size_t m = x.rows(), d = x.cols();
  detail::require(w.size() == m, "weighted_row_sum: weight length mismatch");
  Tensor out = Tensor::zeros({1, d}, x.requires_grad() || w.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    const double wi = w.values()[i];
    for (std::size_t j = 0; j < d; ++j)
      out.values()[j] += wi * x.values()[i * d + j];
  }
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([xd = x.ptr(), wd = w.ptr(), od = out.ptr(), m, d] {
      for (std::size_t i = 0; i < m; ++i) {
        if (wd->requires_grad) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j)
            s += od->grad[j] * xd->values[i * d + j];
          wd->grad[i] += s;
        }
        if (xd->requires_grad) {
          const double wi = wd->values[i];
          for (std::size_t j = 0; j < d; ++j)
            xd->grad[i * d + j] += wi * od->grad[j];
        }
      }
    });
  }
  return out;
}

}  // namespace tubeprune
