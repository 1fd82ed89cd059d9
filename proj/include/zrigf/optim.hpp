#pragma once

#include <map>
#include <string>
#include <vector>

#include "zrigf/gradcheck.hpp"

namespace zrigf {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// Moments exist only for tensors that have been stepped, keyed by name.
struct AdamState {
  std::size_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

// One AdamW update from the tensors' accumulated gradients:
// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
// Any non-finite gradient aborts the step before anything is modified.
void adamw_step(const std::vector<NamedTensor>& params, AdamState& state, double lr, const AdamOptions& options);

// Throws NonFiniteGradientError naming the first offending tensor.
void check_finite_gradients(const std::vector<NamedTensor>& params);

// Scales all gradients so their joint L2 norm is at most max_norm; returns
// the norm before scaling.
double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm);

// Linear warmup from 0 to base_lr over the first warmup_fraction of the
// steps, then linear decay to 0 at total_steps.
double lr_schedule(std::size_t step, std::size_t total_steps, double warmup_fraction, double base_lr);

}  // namespace zrigf
