#pragma once

#include <cstddef>
#include <cstdint>

namespace zrigf {

struct RngState {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;
  bool operator==(const RngState&) const = default;
};

// Counter-based generator: the n-th output is a pure function of
// (key, n), so the whole state is two integers and independent streams
// are derived with split() instead of sharing one sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  explicit Rng(RngState state) : state_(state) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform in [0, n) without modulo bias.
  std::size_t uniform_index(std::size_t n);

  Rng split(std::uint64_t stream) const;
  RngState state() const { return state_; }

 private:
  RngState state_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace zrigf
