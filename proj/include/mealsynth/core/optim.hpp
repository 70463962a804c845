#pragma once

#include <cmath>
#include <vector>

#include "mealsynth/core/autograd.hpp"

namespace mealsynth::nn {

class Adam {
 public:
  Adam(std::vector<ag::Value> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.push_back(Tensor::zeros(p->value.shape));
      v_.push_back(Tensor::zeros(p->value.shape));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      auto& p = params_[pi];
      if (p->grad.data.empty()) continue;
      auto& m = m_[pi];
      auto& v = v_[pi];
      const int64_t n = p->value.numel();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) {
        const double g = p->grad.data[i];
        m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g;
        v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        p->value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  std::vector<ag::Value> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace mealsynth::nn
