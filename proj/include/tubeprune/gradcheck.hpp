#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tubeprune/rng.hpp"
#include "tubeprune/tensor.hpp"

namespace tubeprune {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t probes = 0;
  bool pass(double tol) const { return probes > 0 && max_rel_err < tol; }
};

inline double grad_rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
}

// Central finite-difference check. `fn` must rebuild the forward pass from
// the current values of `inputs` and return the scalar loss; it is called
// repeatedly with perturbed entries, so it must have no other state.
// max_probes_per_tensor == 0 checks every entry.
inline GradCheckResult gradcheck(const std::function<Tensor()>& fn,
                                 const std::vector<Tensor>& inputs,
                                 double h = 1e-5,
                                 std::size_t max_probes_per_tensor = 0,
                                 Rng* probe_rng = nullptr) {
  for (const Tensor& t : inputs)
    detail::require(t.requires_grad(), "gradcheck: input has no grad buffer");
  for (const Tensor& t : inputs) const_cast<Tensor&>(t).zero_grad();
  Tensor loss;
  Tape tape;
  {
    Tape::Scope scope(tape);
    loss = fn();
  }
  tape.backward(loss);

  GradCheckResult res;
  for (const Tensor& t : inputs) {
    std::vector<std::size_t> probe_idx(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) probe_idx[i] = i;
    if (max_probes_per_tensor > 0 && probe_idx.size() > max_probes_per_tensor) {
      detail::require(probe_rng != nullptr,
                      "gradcheck: sampling probes requires an rng");
      probe_rng->shuffle(probe_idx.begin(), probe_idx.end());
      probe_idx.resize(max_probes_per_tensor);
    }
    auto& vals = const_cast<Tensor&>(t).values();
    for (std::size_t i : probe_idx) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double lp = fn().item();
      vals[i] = saved - h;
      const double lm = fn().item();
      vals[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = t.grad()[i];
      res.max_rel_err = std::max(res.max_rel_err, grad_rel_err(analytic, numeric));
      ++res.probes;
    }
  }
  return res;
}

struct NamedGradCheck {
  std::string name;
  GradCheckResult result;
  double tol;
  bool passed() const { return result.pass(tol); }
};

}  // namespace tubeprune
