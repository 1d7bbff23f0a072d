#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtgan/param_store.hpp"

namespace dtgan {

namespace detail {

// Every step is all-or-nothing: a non-finite gradient anywhere aborts before
// any parameter has been touched, so a throw never leaves the store half
// updated.
inline void require_finite_grads(const ParameterStore& store, const char* who) {
  for (const auto& [name, p] : store.entries()) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error(std::string(who) +
                                 ": non-finite gradient in parameter '" +
                                 name + "'");
      }
    }
  }
}

}  // namespace detail

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& store) {
    detail::require_finite_grads(store, "Adam::step");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, p] : store.entries()) {
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.empty()) {
        m.assign(p.values().size(), 0.0);
        v.assign(p.values().size(), 0.0);
      }
      auto& vals = p.mutable_values();
      const auto& grads = p.grad();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * grads[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * grads[i] * grads[i];
        vals[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      }
    }
  }

  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::unordered_map<std::string, std::vector<double>> m_, v_;
};

class RMSProp {
 public:
  explicit RMSProp(double lr, double alpha = 0.99, double eps = 1e-8)
      : lr_(lr), alpha_(alpha), eps_(eps) {}

  void step(ParameterStore& store) {
    detail::require_finite_grads(store, "RMSProp::step");
    for (auto& [name, p] : store.entries()) {
      auto& sq = sq_[name];
      if (sq.empty()) sq.assign(p.values().size(), 0.0);
      auto& vals = p.mutable_values();
      const auto& grads = p.grad();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        sq[i] = alpha_ * sq[i] + (1.0 - alpha_) * grads[i] * grads[i];
        vals[i] -= lr_ * grads[i] / (std::sqrt(sq[i]) + eps_);
      }
    }
  }

  double lr() const { return lr_; }

 private:
  double lr_, alpha_, eps_;
  std::unordered_map<std::string, std::vector<double>> sq_;
};

inline void clip_gradients(ParameterStore& store, double lo, double hi) {
  if (lo > hi) {
    throw std::invalid_argument("clip_gradients: empty interval [" +
                                std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
  }
  for (auto& [name, p] : store.entries()) {
    (void)name;
    for (auto& g : p.mutable_grad()) g = std::clamp(g, lo, hi);
  }
}

inline void clip_weights(ParameterStore& store, double lo, double hi) {
  if (lo > hi) {
    throw std::invalid_argument("clip_weights: empty interval [" +
                                std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
  }
  for (auto& [name, p] : store.entries()) {
    (void)name;
    for (auto& v : p.mutable_values()) v = std::clamp(v, lo, hi);
  }
}

}  // namespace dtgan
