#include "zrigf/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "zrigf/error.hpp"
#include "zrigf/ops.hpp"

namespace zrigf {

namespace {

std::string next_header_token(std::istream& in) {
  std::string token;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> token;
  return token;
}

std::vector<std::size_t> patch_index_map(std::size_t channels, std::size_t height, std::size_t width,
                                         std::size_t p) {
  const std::size_t cols = width / p;
  const std::size_t count = (height / p) * cols;
  const std::size_t dim = channels * p * p;
  std::vector<std::size_t> source(count * dim);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t py = n / cols, px = n % cols;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t dy = 0; dy < p; ++dy) {
        for (std::size_t dx = 0; dx < p; ++dx) {
          const std::size_t y = py * p + dy, x = px * p + dx;
          source[n * dim + c * p * p + dy * p + dx] = (c * height + y) * width + x;
        }
      }
    }
  }
  return source;
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open image " + path.string());
  if (next_header_token(in) != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  RgbImage img;
  try {
    img.width = std::stoul(next_header_token(in));
    img.height = std::stoul(next_header_token(in));
    if (std::stoul(next_header_token(in)) != 255) throw FormatError(path.string() + ": only 8-bit PPM supported");
  } catch (const std::invalid_argument&) {
    throw FormatError(path.string() + ": malformed PPM header");
  }
  in.get();
  img.pixels.resize(img.width * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw CorruptionError(path.string() + ": truncated pixel data");
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write image " + path.string());
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

Tensor image_to_tensor(const RgbImage& image) {
  const std::size_t h = image.height, w = image.width;
  std::vector<double> data(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double unit = image.pixels[(y * w + x) * 3 + c] / 255.0;
        data[(c * h + y) * w + x] = (unit - 0.5) / 0.5;
      }
    }
  }
  return Tensor::from_data({3, h, w}, std::move(data));
}

RgbImage tensor_to_image(const Tensor& pixels) {
  if (pixels.rank() != 3 || pixels.extent(0) != 3) {
    throw DimensionError("tensor_to_image: expected [3 x H x W], got " + shape_to_string(pixels.shape()));
  }
  RgbImage img;
  img.height = pixels.extent(1);
  img.width = pixels.extent(2);
  img.pixels.resize(img.width * img.height * 3);
  const auto d = pixels.data();
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double unit = d[(c * img.height + y) * img.width + x] * 0.5 + 0.5;
        const double scaled = std::round(std::clamp(unit, 0.0, 1.0) * 255.0);
        img.pixels[(y * img.width + x) * 3 + c] = static_cast<std::uint8_t>(scaled);
      }
    }
  }
  return img;
}

Tensor patchify_tensor(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) throw DimensionError("patchify: expected [C x H x W], got " + shape_to_string(image.shape()));
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw DimensionError("patchify: image " + shape_to_string(image.shape()) + " not divisible into " +
                         std::to_string(patch_size) + "-pixel patches");
  }
  const std::size_t count = (h / patch_size) * (w / patch_size);
  return rearrange(image, {count, c * patch_size * patch_size}, patch_index_map(c, h, w, patch_size));
}

ImagePatchGrid patchify(const Tensor& image, std::size_t patch_size) {
  ImagePatchGrid grid;
  grid.patches = patchify_tensor(image, patch_size);
  grid.channels = image.extent(0);
  grid.height = image.extent(1);
  grid.width = image.extent(2);
  grid.patch_size = patch_size;
  return grid;
}

Tensor unpatchify(const ImagePatchGrid& grid) {
  const auto forward = patch_index_map(grid.channels, grid.height, grid.width, grid.patch_size);
  std::vector<std::size_t> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = i;
  return rearrange(grid.patches, {grid.channels, grid.height, grid.width}, std::move(inverse));
}

}  // namespace zrigf
