#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "posebench/nn/tensor.hpp"
#include "posebench/rng.hpp"

namespace posebench::nn {

// Relative error with a floor so comparisons between near-zero gradients do
// not amplify finite-difference noise into false alarms. A true gradient bug
// of any practical size still exceeds the tolerance by orders of magnitude.
inline double gradcheck_rel_err(double a, double b) {
  return std::abs(a - b) / std::max({0.01, std::abs(a), std::abs(b)});
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  int probes = 0;
};

// Compares tape gradients against central finite differences of the scalar
// produced by build(). build() must re-run the forward pass reading the
// current parameter values each time it is called. Probes pick a random
// parameter element; the analytic gradient is taken from one backward pass
// through the freshly built graph.
template <typename Build>
GradCheckReport gradcheck(Build&& build, std::vector<Tensor<double>> params, int probes,
                          Rng& rng, double eps = 1e-3) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor<double> loss = build();
  loss.backward();
  std::vector<std::vector<double>> grads(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads[i] = params[i].has_grad() ? params[i].grad_values()
                                    : std::vector<double>(params[i].numel(), 0.0);
    params[i].zero_grad();
  }

  GradCheckReport rep;
  for (int k = 0; k < probes; ++k) {
    const std::size_t pi = rng.uniform_index(params.size());
    Tensor<double>& p = params[pi];
    const std::size_t ei = rng.uniform_index(static_cast<std::uint64_t>(p.numel()));
    const double x0 = p.data()[ei];
    p.data()[ei] = x0 + eps;
    const double lp = build().values()[0];
    p.data()[ei] = x0 - eps;
    const double lm = build().values()[0];
    p.data()[ei] = x0;
    const double fd = (lp - lm) / (2.0 * eps);
    rep.max_rel_err = std::max(rep.max_rel_err, gradcheck_rel_err(fd, grads[pi][ei]));
    ++rep.probes;
  }
  return rep;
}

}  // namespace posebench::nn
