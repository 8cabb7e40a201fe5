#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tubeprune/tensor.hpp"

namespace tubeprune {

// Row-wise softmax restricted to mask==1 entries. Disallowed entries are
// exactly 0 in the output and receive zero gradient; the max-shift and the
// normalizing sum run over allowed entries only, so disallowed logits cannot
// influence the result even through rounding.
inline Tensor masked_softmax(const Tensor& logits, const Tensor& mask) {
  detail::require(logits.shape().size() == 2, "masked_softmax: logits must be 2-D");
  detail::require(logits.shape() == mask.shape(), "masked_softmax: mask shape mismatch");
  const std::size_t r = logits.rows(), c = logits.cols();
  for (double m : mask.values())
    detail::require(m == 0.0 || m == 1.0, "masked_softmax: mask must be binary");
  Tensor out = Tensor::zeros(logits.shape(), logits.requires_grad());
  for (std::size_t i = 0; i < r; ++i) {
    const double* lrow = logits.values().data() + i * c;
    const double* mrow = mask.values().data() + i * c;
    double* orow = out.values().data() + i * c;
    double mx = -HUGE_VAL;
    for (std::size_t j = 0; j < c; ++j)
      if (mrow[j] == 1.0 && lrow[j] > mx) mx = lrow[j];
    if (mx == -HUGE_VAL)
      throw std::domain_error("masked_softmax: fully-masked row");
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (mrow[j] == 1.0) sum += std::exp(lrow[j] - mx);
    for (std::size_t j = 0; j < c; ++j)
      orow[j] = (mrow[j] == 1.0) ? std::exp(lrow[j] - mx) / sum : 0.0;
  }
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ld = logits.ptr(), od = out.ptr(), r, c] {
      for (std::size_t i = 0; i < r; ++i) {
        const double* y = od->values.data() + i * c;
        const double* g = od->grad.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < c; ++j)
          ld->grad[i * c + j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

// exact GELU: 0.5 x (1 + erf(x / sqrt(2)))
inline Tensor gelu(const Tensor& x) {
  const std::size_t n = x.size();
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x.values()[i];
    out.values()[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([xd = x.ptr(), od = out.ptr(), n] {
      constexpr double inv_sqrt_2pi = 0.3989422804014326779;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = xd->values[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        xd->grad[i] += od->grad[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

// Per-row layer normalization over the last dimension: gamma * xhat + beta.
inline Tensor layernorm(const Tensor& x, const Tensor& gamma,
                        const Tensor& beta, double eps = 1e-5) {
  detail::require(x.shape().size() == 2, "layernorm: x must be 2-D");
  const std::size_t r = x.rows(), d = x.cols();
  detail::require(gamma.size() == d && beta.size() == d,
                  "layernorm: gamma/beta length mismatch");
  Tensor out = Tensor::zeros(
      x.shape(),
      x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  std::vector<double> xhat(r * d);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = x.values().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xi[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xi[j] - mu) * is;
      xhat[i * d + j] = xh;
      out.values()[i * d + j] = gamma.values()[j] * xh + beta.values()[j];
    }
  }
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([xd = x.ptr(), gd = gamma.ptr(), bd = beta.ptr(),
                            od = out.ptr(), xhat = std::move(xhat),
                            inv_std = std::move(inv_std), r, d] {
      for (std::size_t i = 0; i < r; ++i) {
        const double* g = od->grad.data() + i * d;
        const double* xh = xhat.data() + i * d;
        if (bd->requires_grad)
          for (std::size_t j = 0; j < d; ++j) bd->grad[j] += g[j];
        if (gd->requires_grad)
          for (std::size_t j = 0; j < d; ++j) gd->grad[j] += g[j] * xh[j];
        if (xd->requires_grad) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[j] * gd->values[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[j] * gd->values[j];
            xd->grad[i * d + j] +=
                inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

// Affine map: x[S x K] * w[K x N] + b[N] broadcast over rows.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require(x.shape().size() == 2 && w.shape().size() == 2,
                  "linear: x and w must be 2-D");
  detail::require(x.cols() == w.rows(), "linear: inner dimension mismatch");
  const std::size_t s = x.rows(), k = x.cols(), n = w.cols();
  detail::require(b.size() == n, "linear: bias length mismatch");
  Tensor out = Tensor::zeros(
      {s, n}, x.requires_grad() || w.requires_grad() || b.requires_grad());
  detail::mm_nn(out.values().data(), x.values().data(), w.values().data(), s,
                k, n);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values()[i * n + j] += b.values()[j];
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([xd = x.ptr(), wd = w.ptr(), bd = b.ptr(),
                            od = out.ptr(), s, k, n] {
      if (xd->requires_grad)
        detail::mm_nt_acc(xd->grad.data(), od->grad.data(), wd->values.data(),
                          s, n, k);
      if (wd->requires_grad)
        detail::mm_tn_acc(wd->grad.data(), xd->values.data(), od->grad.data(),
                          s, k, n);
      if (bd->requires_grad)
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t j = 0; j < n; ++j) bd->grad[j] += od->grad[i * n + j];
    });
  }
  return out;
}

// Inverted dropout: train mode keeps entries with probability 1-p and scales
// by 1/(1-p); eval mode is the identity (the same handle, no copy).
inline Tensor dropout(const Tensor& x, double p, bool train_mode, Rng& rng) {
  detail::require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (!train_mode || p == 0.0) return x;
  const std::size_t n = x.size();
  std::vector<double> keep(n);
  const double scl = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i)
    keep[i] = (rng.uniform() >= p) ? scl : 0.0;
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = keep[i] * x.values()[i];
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([xd = x.ptr(), od = out.ptr(), keep = std::move(keep),
                            n] {
      for (std::size_t i = 0; i < n; ++i) xd->grad[i] += keep[i] * od->grad[i];
    });
  }
  return out;
}

// Gradient reversal: forward is the identity bit-for-bit; backward passes
// -lambda_grl times the upstream gradient.
inline Tensor grl(const Tensor& x, double lambda_grl) {
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  out.values() = x.values();
  if (detail::should_record(out.requires_grad())) {
    const std::size_t n = x.size();
    Tape::active()->record([xd = x.ptr(), od = out.ptr(), lambda_grl, n] {
      for (std::size_t i = 0; i < n; ++i)
        xd->grad[i] += -lambda_grl * od->grad[i];
    });
  }
  return out;
}

// Mean negative log-softmax of the true class over the batch.
inline Tensor cross_entropy(const Tensor& logits,
                            const std::vector<std::size_t>& labels) {
  detail::require(logits.shape().size() == 2, "cross_entropy: logits must be 2-D");
  const std::size_t b = logits.rows(), a = logits.cols();
  detail::require(labels.size() == b, "cross_entropy: label count mismatch");
  for (std::size_t y : labels)
    detail::require(y < a, "cross_entropy: label out of range");
  if (!logits.all_finite())
    throw std::domain_error("cross_entropy: non-finite logits");
  double total = 0.0;
  std::vector<double> probs(b * a);
  for (std::size_t i = 0; i < b; ++i) {
    const double* l = logits.values().data() + i * a;
    double mx = l[0];
    for (std::size_t j = 1; j < a; ++j) mx = std::max(mx, l[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < a; ++j) sum += std::exp(l[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - l[labels[i]];
    for (std::size_t j = 0; j < a; ++j) probs[i * a + j] = std::exp(l[j] - lse);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(b),
                              logits.requires_grad());
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ld = logits.ptr(), od = out.ptr(),
                            probs = std::move(probs), labels, b, a] {
      const double g = od->grad[0] / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < a; ++j)
          ld->grad[i * a + j] +=
              g * (probs[i * a + j] - (labels[i] == j ? 1.0 : 0.0));
    });
  }
  return out;
}

// Mean stable binary cross-entropy with logits over batch x attributes.
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  detail::require(logits.shape() == targets.shape(),
                  "bce_with_logits: shape mismatch");
  const std::size_t n = logits.size();
  for (double t : targets.values())
    detail::require(t == 0.0 || t == 1.0, "bce_with_logits: non-binary target");
  if (!logits.all_finite())
    throw std::domain_error("bce_with_logits: non-finite logits");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.values()[i];
    const double t = targets.values()[i];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n),
                              logits.requires_grad());
  if (detail::should_record(out.requires_grad())) {
    Tape::active()->record([ld = logits.ptr(), td = targets.ptr(), od = out.ptr(),
                            n] {
      const double g = od->grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double sig = 1.0 / (1.0 + std::exp(-ld->values[i]));
        ld->grad[i] += g * (sig - td->values[i]);
      }
    });
  }
  return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace tubeprune
