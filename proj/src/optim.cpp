#include "brepmae/optim.hpp"

#include <cmath>

#include "brepmae/error.hpp"

namespace brepmae {

AdamW::AdamW(Registry& registry, AdamWConfig cfg) : registry_(&registry), cfg_(cfg) {
  for (const auto& e : registry.params()) {
    m_.emplace_back(e.tensor.numel(), 0.0);
    v_.emplace_back(e.tensor.numel(), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  auto& params = registry_->params();
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& t = params[k].tensor;
    if (!t.requires_grad()) continue;
    auto p = t.raw();
    auto g = t.grad_mut();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < p.size(); ++i) {
      p[i] -= cfg_.lr * cfg_.weight_decay * p[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double m_hat = m[i] / bc1;
      double v_hat = v[i] / bc2;
      p[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

double cosine_lr(const LrSchedule& s, int64_t step) {
  if (step < 0 || step > s.total_steps)
    throw RangeError("cosine_lr: step " + std::to_string(step) + " outside [0," +
                     std::to_string(s.total_steps) + "]");
  double frac = static_cast<double>(step) / static_cast<double>(s.total_steps);
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(M_PI * frac));
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                  std::vector<Tensor> inputs, double h) {
  for (auto& t : inputs) t.zero_grad();
  Tensor out = fn(inputs);
  backward(out);

  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs)
    analytic.emplace_back(t.grad().begin(), t.grad().end());

  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    if (!t.requires_grad()) continue;
    auto raw = t.raw();
    for (size_t i = 0; i < raw.size(); ++i) {
      double saved = raw[i];
      raw[i] = saved + h;
      double fp = fn(inputs).item();
      raw[i] = saved - h;
      double fm = fn(inputs).item();
      raw[i] = saved;
      double fd = (fp - fm) / (2.0 * h);
      double a = analytic[k][i];
      double denom = std::max({std::fabs(a), std::fabs(fd), 1e-4});
      worst = std::max(worst, std::fabs(a - fd) / denom);
    }
  }
  return worst;
}

}  // namespace brepmae
