#include "zrigf/optim.hpp"

#include <cmath>

#include "zrigf/error.hpp"

namespace zrigf {

void check_finite_gradients(const std::vector<NamedTensor>& params) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradientError("non-finite gradient in " + p.name);
    }
  }
}

void adamw_step(const std::vector<NamedTensor>& params, AdamState& state, double lr, const AdamOptions& options) {
  check_finite_gradients(params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (const auto& p : params) {
    Tensor theta = p.tensor;
    auto values = theta.mutable_data();
    auto& moments = state.moments[p.name];
    if (moments.m.empty()) {
      moments.m.assign(values.size(), 0.0);
      moments.v.assign(values.size(), 0.0);
    }
    if (moments.m.size() != values.size()) throw DimensionError("optimizer state size mismatch for " + p.name);
    const bool has_grad = theta.has_grad();
    const auto grad = has_grad ? theta.grad() : std::span<const double>{};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      moments.m[i] = options.beta1 * moments.m[i] + (1.0 - options.beta1) * g;
      moments.v[i] = options.beta2 * moments.v[i] + (1.0 - options.beta2) * g * g;
      const double m_hat = moments.m[i] / correction1;
      const double v_hat = moments.v[i] / correction2;
      const double update = m_hat / (std::sqrt(v_hat) + options.eps) + options.weight_decay * values[i];
      values[i] = round_to_precision(values[i] - lr * update);
    }
  }
}

double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm) {
  check_finite_gradients(params);
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      Tensor t = p.tensor;
      for (double& g : t.mutable_grad()) g *= scale;
    }
  }
  return norm;
}

double lr_schedule(std::size_t step, std::size_t total_steps, double warmup_fraction, double base_lr) {
  if (total_steps == 0) return base_lr;
  if (step > total_steps) step = total_steps;
  const auto warmup = static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (warmup == total_steps) return base_lr;
  return base_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

}  // namespace zrigf
