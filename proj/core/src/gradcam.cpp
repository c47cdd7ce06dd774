#include "mvkd/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "mvkd/ops.hpp"

namespace mvkd {

Heatmap grad_cam_from_graph(Tensor<float> activation, const Tensor<float>& logits, int target_class,
                            int out_h, int out_w) {
  if (activation.ndim() != 4 || activation.dim(0) != 1) {
    raise(ErrorKind::InvalidTarget,
          "target layer is not a spatial [1,K,h,w] map: " + shape_str(activation.shape()));
  }
  if (logits.ndim() != 2 || logits.dim(0) != 1) {
    raise(ErrorKind::ShapeMismatch, "expected [1,C] logits");
  }
  if (target_class < 0 || target_class >= logits.dim(1)) {
    raise(ErrorKind::InvalidLabel, "target class out of range");
  }
  if (!activation.requires_grad()) {
    raise(ErrorKind::InvalidTarget, "target layer is not connected to a gradient graph");
  }

  activation.retain_grad();
  Tensor<float> target_logit = slice(logits, 1, target_class, 1);
  reshape(target_logit, Shape{}).backward();

  const std::int64_t k = activation.dim(1), h = activation.dim(2), w = activation.dim(3);
  const std::int64_t plane = h * w;
  const auto& act = activation.data();
  std::vector<float> map(static_cast<std::size_t>(plane), 0.0f);
  if (activation.has_grad()) {
    const auto& grad = activation.grad();
    for (std::int64_t c = 0; c < k; ++c) {
      double weight = 0;  // global average of the channel gradient
      for (std::int64_t i = 0; i < plane; ++i) weight += grad[c * plane + i];
      weight /= static_cast<double>(plane);
      for (std::int64_t i = 0; i < plane; ++i) {
        map[static_cast<std::size_t>(i)] += static_cast<float>(weight) * act[c * plane + i];
      }
    }
  }
  for (auto& v : map) v = std::max(v, 0.0f);

  Tensor<float> upsampled = resize_bilinear(
      Tensor<float>::from_data({1, h, w}, std::move(map)), out_h, out_w);
  std::vector<float> values = upsampled.data();
  float max_v = 0.0f;
  for (float v : values) max_v = std::max(max_v, v);
  if (max_v > 0.0f) {
    for (auto& v : values) v /= max_v;
  }

  Heatmap heatmap;
  heatmap.width = out_w;
  heatmap.height = out_h;
  heatmap.target_class = target_class;
  heatmap.values = std::move(values);
  return heatmap;
}

Heatmap grad_cam(const Model<float>& model, const Tensor<float>& image, int target_class,
                 const std::string& target_layer) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    raise(ErrorKind::ShapeMismatch, "grad_cam expects a [3,H,W] image");
  }
  Tensor<float> batched = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});

  ActivationTrace<float> trace;
  Tensor<float> logits = model.forward_with_activations(batched, trace);

  Tensor<float> activation;
  for (const auto& [name, tensor] : trace) {
    if (name == target_layer) {
      activation = tensor;
      break;
    }
  }
  if (!activation.defined()) {
    raise(ErrorKind::InvalidTarget, "no captured layer named '" + target_layer + "'");
  }

  Heatmap heatmap = grad_cam_from_graph(activation, logits, target_class,
                                        static_cast<int>(image.dim(1)),
                                        static_cast<int>(image.dim(2)));
  // backward() deposited gradients on the parameters; clear them so a
  // following training step starts clean.
  const_cast<Model<float>&>(model).params().zero_grad();
  return heatmap;
}

void hot_colormap(float t, std::uint8_t rgb[3]) {
  t = std::clamp(t, 0.0f, 1.0f);
  const float r = std::clamp(3.0f * t, 0.0f, 1.0f);
  const float g = std::clamp(3.0f * t - 1.0f, 0.0f, 1.0f);
  const float b = std::clamp(3.0f * t - 2.0f, 0.0f, 1.0f);
  rgb[0] = static_cast<std::uint8_t>(std::lround(r * 255.0f));
  rgb[1] = static_cast<std::uint8_t>(std::lround(g * 255.0f));
  rgb[2] = static_cast<std::uint8_t>(std::lround(b * 255.0f));
}

void render_overlay(const Heatmap& heatmap, const ImageU8& image, const std::string& out_path) {
  if (heatmap.width != image.width || heatmap.height != image.height) {
    raise(ErrorKind::ShapeMismatch, "heatmap and image dimensions differ");
  }
  ImageU8 out;
  out.width = image.width * 2;
  out.height = image.height;
  out.rgb.assign(static_cast<std::size_t>(out.pixel_count()) * 3, 0);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const std::size_t src = (static_cast<std::size_t>(y) * image.width + x) * 3;
      const std::size_t left = (static_cast<std::size_t>(y) * out.width + x) * 3;
      const std::size_t right = left + static_cast<std::size_t>(image.width) * 3;
      for (int c = 0; c < 3; ++c) out.rgb[left + c] = image.rgb[src + c];

      const float gray = (0.299f * image.rgb[src] + 0.587f * image.rgb[src + 1] +
                          0.114f * image.rgb[src + 2]);
      std::uint8_t color[3];
      hot_colormap(heatmap.at(y, x), color);
      for (int c = 0; c < 3; ++c) {
        out.rgb[right + c] = static_cast<std::uint8_t>(std::lround(0.5f * gray + 0.5f * color[c]));
      }
    }
  }
  write_ppm(out_path, out);
}

}  // namespace mvkd
