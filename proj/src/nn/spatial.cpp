#include "zrigf/error.hpp"
#include "zrigf/nn.hpp"

namespace zrigf {

namespace {

void require_image_tensor(const Tensor& x, const char* op) {
  if (x.rank() != 3) throw DimensionError(std::string(op) + ": expected [C x H x W], got " + shape_to_string(x.shape()));
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, const PixelShuffleConfig& cfg) {
  require_image_tensor(x, "pixel_shuffle");
  const std::size_t r = cfg.upscale_factor;
  if (r == 0) throw DimensionError("pixel_shuffle: upscale factor must be positive");
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (cin % (r * r) != 0) {
    throw DimensionError("pixel_shuffle: " + std::to_string(cin) + " channels not divisible by r^2 = " +
                         std::to_string(r * r));
  }
  const std::size_t c = cin / (r * r), oh = h * r, ow = w * r;
  std::vector<std::size_t> source(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t in_c = ch * r * r + (y % r) * r + (xx % r);
        source[(ch * oh + y) * ow + xx] = (in_c * h + y / r) * w + xx / r;
      }
    }
  }
  return rearrange(x, {c, oh, ow}, std::move(source));
}

Tensor pixel_unshuffle(const Tensor& x, const PixelShuffleConfig& cfg) {
  require_image_tensor(x, "pixel_unshuffle");
  const std::size_t r = cfg.upscale_factor;
  if (r == 0) throw DimensionError("pixel_unshuffle: upscale factor must be positive");
  const std::size_t c = x.extent(0), oh = x.extent(1), ow = x.extent(2);
  if (oh % r != 0 || ow % r != 0) {
    throw DimensionError("pixel_unshuffle: spatial extents of " + shape_to_string(x.shape()) +
                         " not divisible by " + std::to_string(r));
  }
  const std::size_t h = oh / r, w = ow / r;
  std::vector<std::size_t> source(c * r * r * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t in_c = ch * r * r + (y % r) * r + (xx % r);
        source[(in_c * h + y / r) * w + xx / r] = (ch * oh + y) * ow + xx;
      }
    }
  }
  return rearrange(x, {c * r * r, h, w}, std::move(source));
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_image_tensor(x, "conv2d");
  if (kernel.rank() != 4 || kernel.extent(2) != 1 || kernel.extent(3) != 1) {
    throw DimensionError("conv2d: only 1x1 kernels [Cout x Cin x 1 x 1] are supported, got " +
                         shape_to_string(kernel.shape()));
  }
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2), cout = kernel.extent(0);
  if (kernel.extent(1) != cin) {
    throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) + " expects " +
                         std::to_string(kernel.extent(1)) + " channels, input has " + std::to_string(cin));
  }
  // Per-pixel channel mixing as one matrix product over [HW x Cin].
  const Tensor pixels = transpose(reshape(x, {cin, h * w}));
  const Tensor weights = transpose(reshape(kernel, {cout, cin}));
  const Tensor mixed = linear(pixels, weights, bias);
  return reshape(transpose(mixed), {cout, h, w});
}

}  // namespace zrigf
