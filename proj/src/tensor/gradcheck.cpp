#include "zrigf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zrigf/rng.hpp"

namespace zrigf {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

namespace {

std::vector<std::size_t> pick_coordinates(std::span<const double> grad, std::size_t budget, Rng& rng) {
  std::vector<std::size_t> all(grad.size());
  std::iota(all.begin(), all.end(), 0);
  if (budget == 0 || budget >= grad.size()) return all;
  const std::size_t largest = (budget + 1) / 2;
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(largest), all.end(),
                    [&](std::size_t a, std::size_t b) { return std::fabs(grad[a]) > std::fabs(grad[b]); });
  std::vector<std::size_t> picked(all.begin(), all.begin() + static_cast<long>(largest));
  // Random fill from the remainder (partial Fisher-Yates).
  for (std::size_t i = largest; i < budget; ++i) {
    const std::size_t j = i + rng.uniform_index(all.size() - i);
    std::swap(all[i], all[j]);
    picked.push_back(all[i]);
  }
  return picked;
}

}  // namespace

GradCheckReport check_gradients(const std::function<Tensor()>& f, const std::vector<NamedTensor>& params,
                                const GradCheckOptions& options) {
  PrecisionScope scope(Precision::kFloat64);
  GradCheckReport report;

  std::vector<Tensor> tensors;
  for (const auto& p : params) tensors.push_back(p.tensor);
  for (auto& t : tensors) {
    if (t.has_grad()) t.zero_grad();
  }
  {
    Tensor loss = f();
    if (loss.requires_grad()) loss.backward();
  }

  Rng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = tensors[pi];
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    GradCheckEntry entry;
    entry.name = params[pi].name;
    const auto coords = pick_coordinates(analytic, options.max_entries_per_tensor, rng);
    auto data = t.mutable_data();
    for (std::size_t idx : coords) {
      const double original = data[idx];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard no_grad;
        data[idx] = original + options.step;
        plus = f().item();
        data[idx] = original - options.step;
        minus = f().item();
        data[idx] = original;
      }
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double abs_err = std::fabs(numeric - analytic[idx]);
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic[idx]), options.denominator_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
      ++entry.checked;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace zrigf
