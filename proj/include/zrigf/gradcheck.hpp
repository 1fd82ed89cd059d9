#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zrigf/tensor.hpp"

namespace zrigf {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise the largest-|gradient| half and a
  // seeded random half of this many coordinates per tensor.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  // Lower bound of the relative-error denominator. Central differences at
  // step 1e-5 carry ~1e-10 of round-off, so smaller gradients are judged
  // against this floor instead of their own size.
  double denominator_floor = 1e-6;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

// Compares autodiff gradients of the scalar program f against central
// differences. Runs in 64-bit mode regardless of the global setting;
// failures are reported, never thrown.
GradCheckReport check_gradients(const std::function<Tensor()>& f, const std::vector<NamedTensor>& params,
                                const GradCheckOptions& options = {});

}  // namespace zrigf
