#include <cmath>
#include <numeric>

#include "zrigf/contrastive.hpp"
#include "zrigf/error.hpp"
#include "zrigf/ops.hpp"

namespace zrigf {

MaskSpec sample_mask(std::size_t patches_per_side, std::size_t block_size, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("mask ratio must lie in [0, 1), got " + std::to_string(ratio));
  if (block_size == 0 || patches_per_side % block_size != 0) {
    throw ConfigError("mask blocks of " + std::to_string(block_size) + " patches do not tile a " +
                      std::to_string(patches_per_side) + "-patch grid");
  }
  const std::size_t blocks_per_side = patches_per_side / block_size;
  const std::size_t n_blocks = blocks_per_side * blocks_per_side;
  const auto n_masked = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n_blocks) + 0.5));

  std::vector<std::size_t> order(n_blocks);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < n_masked; ++i) {
    std::swap(order[i], order[i + rng.uniform_index(n_blocks - i)]);
  }

  MaskSpec m;
  m.keep.assign(patches_per_side * patches_per_side, 1);
  m.patches_per_side = patches_per_side;
  m.block_size = block_size;
  m.ratio = ratio;
  for (std::size_t i = 0; i < n_masked; ++i) {
    const std::size_t by = order[i] / blocks_per_side, bx = order[i] % blocks_per_side;
    for (std::size_t dy = 0; dy < block_size; ++dy) {
      for (std::size_t dx = 0; dx < block_size; ++dx) {
        m.keep[(by * block_size + dy) * patches_per_side + bx * block_size + dx] = 0;
      }
    }
  }
  m.masked_count = n_masked * block_size * block_size;
  return m;
}

Tensor apply_mask(const Tensor& patches, const MaskSpec& mask) {
  if (patches.rank() != 2 || patches.extent(0) != mask.keep.size()) {
    throw DimensionError("apply_mask: mask of " + std::to_string(mask.keep.size()) + " patches vs " +
                         shape_to_string(patches.shape()));
  }
  const std::size_t dim = patches.extent(1);
  std::vector<double> m(patches.numel());
  for (std::size_t n = 0; n < mask.keep.size(); ++n) {
    std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(n * dim), dim, mask.keep[n] ? 1.0 : 0.0);
  }
  return mul(patches, Tensor::from_data(patches.shape(), std::move(m)));
}

ImagePatchGrid apply_mask(const ImagePatchGrid& grid, const MaskSpec& mask) {
  ImagePatchGrid out = grid;
  out.patches = apply_mask(grid.patches, mask);
  return out;
}

}  // namespace zrigf
