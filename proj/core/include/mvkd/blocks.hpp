#pragma once

#include <string>
#include <vector>

#include "mvkd/ops.hpp"
#include "mvkd/params.hpp"

namespace mvkd {

// Layers register their parameters in the given store under `name.*` at
// construction time and keep handles to the shared tensors. Forward passes
// are pure functions of (parameters, input).

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;  // [out, in/groups, k, k]
  Tensor<T> bias;    // [out]
  int stride = 1, padding = 0, groups = 1;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<T>& params, const std::string& name, int in_ch, int out_ch, int kernel,
              int stride, int padding, int groups, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding, groups); }
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  LinearLayer() = default;
  LinearLayer(ParamStore<T>& params, const std::string& name, int in_dim, int out_dim, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gamma, beta;
  double eps = 1e-5;

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<T>& params, const std::string& name, int dim);

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
};

// Scaled dot-product self-attention over [B, N, d] with h heads of size d/h.
template <typename T>
struct MultiHeadAttention {
  LinearLayer<T> q, k, v, out;
  int heads = 1;
  int dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& params, const std::string& name, int dim, int heads, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
};

// Pre-norm encoder: x + MHA(LN(x)), then + MLP(LN(.)).
template <typename T>
struct TransformerLayer {
  LayerNormLayer<T> norm1, norm2;
  MultiHeadAttention<T> attn;
  LinearLayer<T> fc1, fc2;
  Activation act = Activation::Gelu;

  TransformerLayer() = default;
  TransformerLayer(ParamStore<T>& params, const std::string& name, int dim, int heads,
                   double mlp_ratio, Activation act, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
};

// Inverted residual: expand 1x1 -> depthwise 3x3 (stride) -> project 1x1,
// with a skip connection iff stride == 1 and channel counts match.
template <typename T>
struct MobileNetV2Block {
  Conv2dLayer<T> expand, depthwise, project;
  bool has_expand = false;
  bool use_residual = false;

  MobileNetV2Block() = default;
  MobileNetV2Block(ParamStore<T>& params, const std::string& name, int in_ch, int out_ch,
                   int expansion, int stride, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
};

// Local 3x3 conv -> 1x1 to embed dim -> unfold(p) -> transformers across
// patches at fixed intra-patch position -> fold -> 1x1 back -> concat with
// the input -> 3x3 fusion. Preserves the input shape.
template <typename T>
struct MobileViTBlock {
  Conv2dLayer<T> local_conv, proj_in, proj_out, fusion;
  std::vector<TransformerLayer<T>> layers;
  int patch = 2;

  MobileViTBlock() = default;
  MobileViTBlock(ParamStore<T>& params, const std::string& name, int channels, int embed_dim,
                 int depth, int patch, int heads, double mlp_ratio, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
};

// ViT front end: non-overlapping P x P patches, linear projection, class
// token, learned positional embeddings. [B,3,H,W] -> [B, N+1, d].
template <typename T>
struct PatchEmbed {
  LinearLayer<T> proj;
  Tensor<T> cls_token;  // [1, 1, d]
  Tensor<T> pos_embed;  // [1, N+1, d]
  int patch = 32;

  PatchEmbed() = default;
  PatchEmbed(ParamStore<T>& params, const std::string& name, int patch, int in_h, int in_w,
             int embed_dim, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
};

// Weight initializers (He-normal convolutions, truncated-normal linears).
template <typename T>
Tensor<T> conv_init(const Shape& shape, Rng& rng);
template <typename T>
Tensor<T> linear_init(const Shape& shape, Rng& rng);

}  // namespace mvkd
