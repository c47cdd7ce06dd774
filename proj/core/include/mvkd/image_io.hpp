#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvkd/tensor.hpp"

namespace mvkd {

// Interleaved 8-bit RGB raster.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 * width * height

  std::int64_t pixel_count() const { return std::int64_t(width) * height; }
};

// Binary PPM (P6, maxval 255). DecodeError names the offending path.
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& image);

// [3,H,W] float in [0,1] -> 8-bit raster (values clamped).
ImageU8 tensor_to_image(const Tensor<float>& chw);
// Inverse direction: 8-bit raster -> [3,H,W] in [0,1].
Tensor<float> image_to_tensor(const ImageU8& image);

struct ChannelNormalization {
  std::array<float, 3> mean{0.f, 0.f, 0.f};
  std::array<float, 3> stddev{1.f, 1.f, 1.f};
};

// Bilinear resize (half-pixel centers) to S x S, values scaled to [0,1],
// then the optional per-channel affine normalization.
Tensor<float> preprocess(const ImageU8& image, int target_size,
                         const ChannelNormalization* normalization = nullptr);
Tensor<float> resize_bilinear(const Tensor<float>& chw, int out_h, int out_w);

}  // namespace mvkd
