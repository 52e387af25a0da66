#pragma once

#include <cmath>
#include <vector>

#include "motrans/nn/model.hpp"

namespace motrans::nn {

template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedParam<T>>& params, double lr, double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9)
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      m_.emplace_back(p.tensor.size(), T(0));
      v_.emplace_back(p.tensor.size(), T(0));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    const T step = static_cast<T>(lr_ * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T eps = static_cast<T>(eps_ * std::sqrt(c2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto w = params_[i].tensor.data();
      auto g = params_[i].tensor.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        w[j] -= step * m[j] / (std::sqrt(v[j]) + eps);
      }
    }
  }

 private:
  std::vector<NamedParam<T>>& params_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace motrans::nn
