#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace nsf {

// First-order optimizer with adaptive moments (decoupled weight decay fixed
// at zero). Conventional moment constants beta1=0.9, beta2=0.999, eps=1e-8.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t size, double learning_rate)
      : lr_(learning_rate), m_(size, 0.0), v_(size, 0.0) {}

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + kEps);
    }
  }

 private:
  double lr_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace nsf
