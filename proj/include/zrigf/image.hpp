#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "zrigf/tensor.hpp"

namespace zrigf {

// 8-bit interleaved RGB, as stored in binary PPM.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3
};

RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

// [3 x H x W] with each channel mapped from [0,1] by (v - 0.5) / 0.5.
Tensor image_to_tensor(const RgbImage& image);
RgbImage tensor_to_image(const Tensor& pixels);

// Patch vectors of an image. Patch n covers grid cell (n / cols, n % cols);
// inside a patch the layout is channel-major: c*p*p + dy*p + dx.
struct ImagePatchGrid {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t patch_size = 0;
  Tensor patches;  // [N x p*p*channels]

  std::size_t rows() const { return height / patch_size; }
  std::size_t cols() const { return width / patch_size; }
  std::size_t count() const { return rows() * cols(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
};

ImagePatchGrid patchify(const Tensor& image, std::size_t patch_size);
Tensor unpatchify(const ImagePatchGrid& grid);
// Same layout as patchify, over an arbitrary differentiable [C x H x W] tensor.
Tensor patchify_tensor(const Tensor& image, std::size_t patch_size);

}  // namespace zrigf
