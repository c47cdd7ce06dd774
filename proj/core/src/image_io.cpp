#include "mvkd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mvkd {

namespace {

// Skips whitespace and '#' comment lines between PPM header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  for (;;) {
    const int c = in.peek();
    if (c == EOF) raise(ErrorKind::DecodeError, path + ": unexpected end of header");
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    break;
  }
  int value = 0;
  if (!(in >> value)) raise(ErrorKind::DecodeError, path + ": malformed header integer");
  return value;
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::DecodeError, path + ": cannot open file");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in || m0 != 'P' || m1 != '6') raise(ErrorKind::DecodeError, path + ": not a binary PPM (P6)");

  ImageU8 image;
  image.width = next_header_int(in, path);
  image.height = next_header_int(in, path);
  const int maxval = next_header_int(in, path);
  if (image.width < 1 || image.height < 1) raise(ErrorKind::DecodeError, path + ": degenerate dimensions");
  if (maxval != 255) raise(ErrorKind::DecodeError, path + ": only maxval 255 is supported");
  in.get();  // single whitespace byte after the header

  image.rgb.resize(static_cast<std::size_t>(image.pixel_count()) * 3);
  in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) {
    raise(ErrorKind::DecodeError, path + ": truncated pixel data");
  }
  return image;
}

void write_ppm(const std::string& path, const ImageU8& image) {
  if (image.width < 1 || image.height < 1 ||
      image.rgb.size() != static_cast<std::size_t>(image.pixel_count()) * 3) {
    raise(ErrorKind::InvalidShape, "image buffer inconsistent with dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::IoError, "cannot open " + path + " for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) raise(ErrorKind::IoError, "write failed: " + path);
}

ImageU8 tensor_to_image(const Tensor<float>& chw) {
  if (chw.ndim() != 3 || chw.dim(0) != 3) raise(ErrorKind::ShapeMismatch, "expected [3,H,W] tensor");
  ImageU8 image;
  image.height = static_cast<int>(chw.dim(1));
  image.width = static_cast<int>(chw.dim(2));
  image.rgb.resize(static_cast<std::size_t>(image.pixel_count()) * 3);
  const auto& v = chw.data();
  const std::int64_t plane = image.pixel_count();
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float x = std::clamp(v[c * plane + i], 0.0f, 1.0f);
      image.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(x * 255.0f));
    }
  }
  return image;
}

Tensor<float> image_to_tensor(const ImageU8& image) {
  const std::int64_t plane = image.pixel_count();
  std::vector<float> data(static_cast<std::size_t>(plane) * 3);
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      data[c * plane + i] = static_cast<float>(image.rgb[i * 3 + c]) / 255.0f;
    }
  }
  return Tensor<float>::from_data({3, image.height, image.width}, std::move(data));
}

Tensor<float> resize_bilinear(const Tensor<float>& chw, int out_h, int out_w) {
  if (chw.ndim() != 3) raise(ErrorKind::ShapeMismatch, "resize expects [C,H,W]");
  const std::int64_t channels = chw.dim(0), in_h = chw.dim(1), in_w = chw.dim(2);
  if (out_h < 1 || out_w < 1) raise(ErrorKind::InvalidParameter, "target size must be >= 1");
  std::vector<float> out(static_cast<std::size_t>(channels * out_h * out_w));
  const auto& src = chw.data();
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (std::int64_t c = 0; c < channels; ++c) {
    const float* plane = src.data() + c * in_h * in_w;
    float* dst = out.data() + c * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
      const std::int64_t y0 = static_cast<std::int64_t>(fy);
      const std::int64_t y1 = std::min(y0 + 1, in_h - 1);
      const double wy = fy - static_cast<double>(y0);
      for (int x = 0; x < out_w; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
        const std::int64_t x0 = static_cast<std::int64_t>(fx);
        const std::int64_t x1 = std::min(x0 + 1, in_w - 1);
        const double wx = fx - static_cast<double>(x0);
        const double top = plane[y0 * in_w + x0] * (1.0 - wx) + plane[y0 * in_w + x1] * wx;
        const double bottom = plane[y1 * in_w + x0] * (1.0 - wx) + plane[y1 * in_w + x1] * wx;
        dst[y * out_w + x] = static_cast<float>(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return Tensor<float>::from_data({channels, out_h, out_w}, std::move(out));
}

Tensor<float> preprocess(const ImageU8& image, int target_size,
                         const ChannelNormalization* normalization) {
  if (target_size < 8) raise(ErrorKind::InvalidParameter, "target size must be >= 8");
  if (image.width < 1 || image.height < 1) raise(ErrorKind::DecodeError, "degenerate source image");
  Tensor<float> chw = image_to_tensor(image);
  if (image.width != target_size || image.height != target_size) {
    chw = resize_bilinear(chw, target_size, target_size);
  }
  if (normalization != nullptr) {
    auto data = chw.data();
    const std::int64_t plane = std::int64_t(target_size) * target_size;
    for (int c = 0; c < 3; ++c) {
      const float mean = normalization->mean[static_cast<std::size_t>(c)];
      const float stddev = normalization->stddev[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < plane; ++i) {
        data[c * plane + i] = (data[c * plane + i] - mean) / stddev;
      }
    }
    chw = Tensor<float>::from_data(chw.shape(), std::move(data));
  }
  return chw;
}

}  // namespace mvkd
