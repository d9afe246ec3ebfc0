#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "posebench/errors.hpp"
#include "posebench/nn/tensor.hpp"

namespace posebench::nn {

// Piecewise schedule: constant at the base rate, then a cosine decay to zero
// over the remainder. anneal_frac is the fraction of total steps spent flat.
inline double cosine_lr(double base, std::int64_t step, std::int64_t total_steps,
                        double anneal_frac = 0.72) {
  if (total_steps <= 0) return base;
  const double boundary = anneal_frac * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < boundary) return base;
  const double span = static_cast<double>(total_steps) - boundary;
  if (span <= 0.0) return base;
  const double phase = (s - boundary) / span;
  return base * 0.5 * (1.0 + std::cos(M_PI * phase));
}

// Adam over a fixed parameter list. Moments are stored in parameter order so
// checkpoints can carry them; the element updates run in double regardless
// of T to keep float training well conditioned.
template <typename T>
class Adam {
 public:
  struct Config {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Tensor<T>> params, Config cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<std::size_t>(params_[i].numel()), T(0));
      v_[i].assign(static_cast<std::size_t>(params_[i].numel()), T(0));
    }
  }

  void step() { step_with_lr(cfg_.lr); }

  void step_with_lr(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = params_[i];
      if (!p.has_grad()) continue;
      T* g = p.grad();
      T* w = p.data();
      for (std::int64_t j = 0; j < p.numel(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = cfg_.beta1 * static_cast<double>(m_[i][j]) + (1.0 - cfg_.beta1) * gj;
        const double vj =
            cfg_.beta2 * static_cast<double>(v_[i][j]) + (1.0 - cfg_.beta2) * gj * gj;
        m_[i][j] = static_cast<T>(mj);
        v_[i][j] = static_cast<T>(vj);
        const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
        w[j] = static_cast<T>(static_cast<double>(w[j]) - update);
      }
      p.zero_grad();
    }
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  std::size_t size() const { return params_.size(); }
  std::vector<T>& moment1(std::size_t i) { return m_[i]; }
  std::vector<T>& moment2(std::size_t i) { return v_[i]; }
  const Config& config() const { return cfg_; }

 private:
  std::vector<Tensor<T>> params_;
  Config cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace posebench::nn
