#include "zrigf/params.hpp"

#include <algorithm>

#include "zrigf/error.hpp"

namespace zrigf {

Tensor ParameterStore::create(const std::string& name, Shape shape, Init init, const std::string& group, Rng& rng,
                              double stddev) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  const std::size_t n = shape_numel(shape);
  std::vector<double> values(n, 0.0);
  switch (init) {
    case Init::kNormal:
      for (double& v : values) v = rng.normal(0.0, stddev);
      break;
    case Init::kOnes:
      std::fill(values.begin(), values.end(), 1.0);
      break;
    case Init::kZeros:
      break;
  }
  Tensor t = Tensor::from_data(std::move(shape), std::move(values), true);
  entries_.push_back({name, group, t});
  return t;
}

const ParameterEntry* ParameterStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<std::string> ParameterStore::groups() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (std::find(out.begin(), out.end(), e.group) == out.end()) out.push_back(e.group);
  }
  return out;
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

}  // namespace zrigf
