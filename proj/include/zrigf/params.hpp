#pragma once

#include <string>
#include <vector>

#include "zrigf/rng.hpp"
#include "zrigf/tensor.hpp"

namespace zrigf {

enum class Init { kNormal, kZeros, kOnes };

struct ParameterEntry {
  std::string name;
  std::string group;
  Tensor tensor;
};

// Owns every trainable tensor by name, in creation order. Groups are the
// unit of freezing (stage 1 freezes text encoder and decoder groups).
class ParameterStore {
 public:
  Tensor create(const std::string& name, Shape shape, Init init, const std::string& group, Rng& rng,
                double stddev = 0.02);

  const std::vector<ParameterEntry>& entries() const { return entries_; }
  const ParameterEntry* find(const std::string& name) const;
  std::vector<std::string> groups() const;
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<ParameterEntry> entries_;
};

}  // namespace zrigf
