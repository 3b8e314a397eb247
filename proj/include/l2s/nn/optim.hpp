#pragma once

#include "l2s/nn/layers.hpp"

namespace l2s::nn {

// Adam with the usual bias correction.
class Adam {
public:
  Adam(const ParamStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, t] : params.all()) {
      slots_.push_back({t, std::vector<double>(t->numel(), 0.0),
                        std::vector<double>(t->numel(), 0.0)});
    }
  }

  void step(double lr_override = -1.0) {
    ++t_;
    double lr = lr_override >= 0.0 ? lr_override : lr_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& s : slots_) {
      for (size_t i = 0; i < s.param->numel(); ++i) {
        double g = s.param->grad[i];
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
        double mhat = s.m[i] / bc1;
        double vhat = s.v[i] / bc2;
        s.param->value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  int steps_taken() const { return t_; }

private:
  struct Slot {
    TensorPtr param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

// Cosine decay from lr0 to lr_min over total_steps.
inline double cosine_lr(double lr0, int step, int total_steps, double lr_min_frac = 0.01) {
  if (total_steps <= 1) return lr0;
  double progress = std::min(1.0, double(step) / double(total_steps - 1));
  double lr_min = lr0 * lr_min_frac;
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * progress));
}

}  // namespace l2s::nn
