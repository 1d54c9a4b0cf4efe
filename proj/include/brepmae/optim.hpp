#pragma once

#include <functional>
#include <vector>

#include "brepmae/layers.hpp"
#include "brepmae/tensor.hpp"

namespace brepmae {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Decoupled weight decay applied before the bias-corrected Adam update:
//   p <- p - lr*wd*p
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  AdamW(Registry& registry, AdamWConfig cfg);

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t step_count() const { return step_; }

  // One update from the gradients currently held by the registry parameters.
  void step();

 private:
  Registry* registry_;
  AdamWConfig cfg_;
  int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LrSchedule {
  double base_lr = 1e-4;
  double min_lr = 0.0;
  int64_t total_steps = 1;
};

// lr = min + 0.5*(base-min)*(1+cos(pi*step/total)); no warmup
double cosine_lr(const LrSchedule& s, int64_t step);

// Max relative error between reverse-mode gradients and central differences
// (h=1e-5) over every element of every input marked requires_grad.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                  std::vector<Tensor> inputs, double h = 1e-5);

}  // namespace brepmae
