#pragma once

#include <string>

#include "mvkd/image_io.hpp"
#include "mvkd/model.hpp"

namespace mvkd {

// Per-pixel relevance map, max-normalized to [0,1] (identically zero when the
// target logit does not depend on the chosen layer).
struct Heatmap {
  int width = 0;
  int height = 0;
  int target_class = 0;
  std::vector<float> values;  // height * width, row-major

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Core Grad-CAM computation on an already-built graph: channel weights are
// the spatial means of d(logit)/d(activation), the map is
// ReLU(sum_k w_k * A_k) upsampled to (out_h, out_w) and max-normalized.
// `activation` must be a [1,K,h,w] tensor on the path to `logits` [1,C].
Heatmap grad_cam_from_graph(Tensor<float> activation, const Tensor<float>& logits, int target_class,
                            int out_h, int out_w);

// Runs the model on one [3,H,W] image and applies Grad-CAM at the named
// captured layer ("features" is the final fusion convolution output).
Heatmap grad_cam(const Model<float>& model, const Tensor<float>& image, int target_class,
                 const std::string& target_layer = "features");

// Side-by-side PPM: original | hot-colormapped heatmap alpha-blended (0.5)
// onto the grayscale original.
void render_overlay(const Heatmap& heatmap, const ImageU8& image, const std::string& out_path);

// Monotone "hot" colormap (black -> red -> yellow -> white).
void hot_colormap(float t, std::uint8_t rgb[3]);

}  // namespace mvkd
