#pragma once
//
// Plain AdamW over raw vectors. Written independently of the DBA update so
// the two can be cross-checked on identical gradient streams.
//

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dba {

class ReferenceAdamW {
 public:
  ReferenceAdamW(std::size_t param_count, double lr, double beta1, double beta2, double eps,
                 double weight_decay)
      : lr_(lr),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        weight_decay_(weight_decay),
        m_(param_count, 0.0),
        v_(param_count, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw std::invalid_argument("ReferenceAdamW: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    if (weight_decay_ > 0.0) {
      const double decay = 1.0 - lr_ * weight_decay_;
      for (double& p : params) p *= decay;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double m_hat = m_[i] / bc1;
      const double v_hat = v_[i] / bc2;
      params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }

  long step_count() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace dba
