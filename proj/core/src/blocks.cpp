#include "mvkd/blocks.hpp"

#include <cmath>

namespace mvkd {

template <typename T>
Tensor<T> conv_init(const Shape& shape, Rng& rng) {
  // He-normal over fan-in = (in/groups) * k * k.
  const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
  return Tensor<T>::normal(shape, 0.0, std::sqrt(2.0 / fan_in), rng);
}

template <typename T>
Tensor<T> linear_init(const Shape& shape, Rng& rng) {
  return Tensor<T>::truncated_normal(shape, 0.0, 0.02, rng);
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(ParamStore<T>& params, const std::string& name, int in_ch, int out_ch,
                            int kernel, int stride, int padding, int groups, Rng& rng)
    : stride(stride), padding(padding), groups(groups) {
  if (in_ch % groups != 0 || out_ch % groups != 0) {
    raise(ErrorKind::InvalidConfig, name + ": channels not divisible by groups");
  }
  const Shape wshape{out_ch, in_ch / groups, kernel, kernel};
  weight = params.add(name + ".weight", conv_init<T>(wshape, rng));
  bias = params.add(name + ".bias", Tensor<T>::zeros({out_ch}));
}

template <typename T>
LinearLayer<T>::LinearLayer(ParamStore<T>& params, const std::string& name, int in_dim, int out_dim,
                            Rng& rng) {
  weight = params.add(name + ".weight", linear_init<T>({in_dim, out_dim}, rng));
  bias = params.add(name + ".bias", Tensor<T>::zeros({out_dim}));
}

template <typename T>
LayerNormLayer<T>::LayerNormLayer(ParamStore<T>& params, const std::string& name, int dim) {
  gamma = params.add(name + ".gamma", Tensor<T>::ones({dim}));
  beta = params.add(name + ".beta", Tensor<T>::zeros({dim}));
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParamStore<T>& params, const std::string& name, int dim,
                                          int heads, Rng& rng)
    : heads(heads), dim(dim) {
  if (heads < 1 || dim % heads != 0) {
    raise(ErrorKind::InvalidConfig,
          name + ": heads (" + std::to_string(heads) + ") must divide dim (" + std::to_string(dim) + ")");
  }
  q = LinearLayer<T>(params, name + ".q", dim, dim, rng);
  k = LinearLayer<T>(params, name + ".k", dim, dim, rng);
  v = LinearLayer<T>(params, name + ".v", dim, dim, rng);
  out = LinearLayer<T>(params, name + ".out", dim, dim, rng);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::forward(const Tensor<T>& x) const {
  const std::int64_t b = x.dim(0), n = x.dim(1);
  const std::int64_t dh = dim / heads;

  auto split_heads = [&](Tensor<T> t) {
    t = reshape(t, {b, n, heads, dh});
    t = permute(t, {0, 2, 1, 3});
    return reshape(t, {b * heads, n, dh});
  };

  Tensor<T> qh = split_heads(q.forward(x));
  Tensor<T> kh = split_heads(k.forward(x));
  Tensor<T> vh = split_heads(v.forward(x));

  Tensor<T> scores = mul_scalar(matmul(qh, permute(kh, {0, 2, 1})), 1.0 / std::sqrt(double(dh)));
  Tensor<T> attn = softmax(scores);
  Tensor<T> ctx = matmul(attn, vh);  // [B*h, N, dh]

  ctx = reshape(ctx, {b, heads, n, dh});
  ctx = permute(ctx, {0, 2, 1, 3});
  ctx = reshape(ctx, {b, n, dim});
  return out.forward(ctx);
}

template <typename T>
TransformerLayer<T>::TransformerLayer(ParamStore<T>& params, const std::string& name, int dim,
                                      int heads, double mlp_ratio, Activation act, Rng& rng)
    : act(act) {
  norm1 = LayerNormLayer<T>(params, name + ".norm1", dim);
  attn = MultiHeadAttention<T>(params, name + ".attn", dim, heads, rng);
  norm2 = LayerNormLayer<T>(params, name + ".norm2", dim);
  const int hidden = std::max(1, static_cast<int>(std::lround(dim * mlp_ratio)));
  fc1 = LinearLayer<T>(params, name + ".fc1", dim, hidden, rng);
  fc2 = LinearLayer<T>(params, name + ".fc2", hidden, dim, rng);
}

template <typename T>
Tensor<T> TransformerLayer<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = add(x, attn.forward(norm1.forward(x)));
  Tensor<T> m = fc2.forward(activation(fc1.forward(norm2.forward(h)), act));
  return add(h, m);
}

template <typename T>
MobileNetV2Block<T>::MobileNetV2Block(ParamStore<T>& params, const std::string& name, int in_ch,
                                      int out_ch, int expansion, int stride, Rng& rng) {
  if (stride != 1 && stride != 2) {
    raise(ErrorKind::InvalidConfig, name + ": stride must be 1 or 2");
  }
  const int hidden = in_ch * expansion;
  has_expand = expansion != 1;
  if (has_expand) {
    expand = Conv2dLayer<T>(params, name + ".expand", in_ch, hidden, 1, 1, 0, 1, rng);
  }
  depthwise = Conv2dLayer<T>(params, name + ".depthwise", hidden, hidden, 3, stride, 1, hidden, rng);
  project = Conv2dLayer<T>(params, name + ".project", hidden, out_ch, 1, 1, 0, 1, rng);
  use_residual = stride == 1 && in_ch == out_ch;
}

template <typename T>
Tensor<T> MobileNetV2Block<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = x;
  if (has_expand) h = silu(expand.forward(h));
  h = silu(depthwise.forward(h));
  h = project.forward(h);  // linear bottleneck, no activation
  return use_residual ? add(x, h) : h;
}

template <typename T>
MobileViTBlock<T>::MobileViTBlock(ParamStore<T>& params, const std::string& name, int channels,
                                  int embed_dim, int depth, int patch, int heads, double mlp_ratio,
                                  Rng& rng)
    : patch(patch) {
  local_conv = Conv2dLayer<T>(params, name + ".local", channels, channels, 3, 1, 1, 1, rng);
  proj_in = Conv2dLayer<T>(params, name + ".proj_in", channels, embed_dim, 1, 1, 0, 1, rng);
  layers.reserve(static_cast<std::size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    layers.emplace_back(params, name + ".layers." + std::to_string(i), embed_dim, heads, mlp_ratio,
                        Activation::Silu, rng);
  }
  proj_out = Conv2dLayer<T>(params, name + ".proj_out", embed_dim, channels, 1, 1, 0, 1, rng);
  fusion = Conv2dLayer<T>(params, name + ".fusion", 2 * channels, channels, 3, 1, 1, 1, rng);
}

template <typename T>
Tensor<T> MobileViTBlock<T>::forward(const Tensor<T>& x) const {
  const std::int64_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  if (h % patch != 0 || w % patch != 0) {
    raise(ErrorKind::PatchMismatch, "feature map " + shape_str(x.shape()) +
                                        " not divisible by patch " + std::to_string(patch));
  }
  Tensor<T> y = silu(local_conv.forward(x));
  y = proj_in.forward(y);  // [B, d, H, W]
  const std::int64_t d = y.dim(1);

  Tensor<T> tokens = unfold_patches(y, patch);  // [B, N, q, d]
  const std::int64_t n = tokens.dim(1), q = tokens.dim(2);
  // Attention runs across patches for each fixed pixel position, keeping the
  // intra-patch spatial order intact.
  tokens = permute(tokens, {0, 2, 1, 3});       // [B, q, N, d]
  tokens = reshape(tokens, {b * q, n, d});
  for (const auto& layer : layers) tokens = layer.forward(tokens);
  tokens = reshape(tokens, {b, q, n, d});
  tokens = permute(tokens, {0, 2, 1, 3});       // [B, N, q, d]
  y = fold_patches(tokens, patch, h, w);        // [B, d, H, W]

  y = proj_out.forward(y);                      // [B, C, H, W]
  Tensor<T> merged = concat(std::vector<Tensor<T>>{x, y}, 1);
  return silu(fusion.forward(merged));
}

template <typename T>
PatchEmbed<T>::PatchEmbed(ParamStore<T>& params, const std::string& name, int patch, int in_h,
                          int in_w, int embed_dim, Rng& rng)
    : patch(patch) {
  if (in_h % patch != 0 || in_w % patch != 0) {
    raise(ErrorKind::PatchMismatch, name + ": input " + shape_str({in_h, in_w}) +
                                        " not divisible by patch " + std::to_string(patch));
  }
  const int tokens = (in_h / patch) * (in_w / patch);
  proj = LinearLayer<T>(params, name + ".proj", patch * patch * 3, embed_dim, rng);
  cls_token = params.add(name + ".cls_token", linear_init<T>({1, 1, embed_dim}, rng));
  pos_embed = params.add(name + ".pos_embed", linear_init<T>({1, tokens + 1, embed_dim}, rng));
}

template <typename T>
Tensor<T> PatchEmbed<T>::forward(const Tensor<T>& x) const {
  const std::int64_t b = x.dim(0);
  Tensor<T> patches = unfold_patches(x, patch);  // [B, N, p*p, 3]
  const std::int64_t n = patches.dim(1);
  patches = reshape(patches, {b, n, patches.dim(2) * patches.dim(3)});
  Tensor<T> tokens = proj.forward(patches);  // [B, N, d]

  Tensor<T> cls = add(Tensor<T>::zeros({b, 1, cls_token.dim(2)}), cls_token);  // broadcast to batch
  tokens = concat(std::vector<Tensor<T>>{cls, tokens}, 1);                     // [B, N+1, d]
  return add(tokens, pos_embed);
}

#define MVKD_INSTANTIATE_BLOCKS(T)                                                   \
  template Tensor<T> conv_init<T>(const Shape&, Rng&);                               \
  template Tensor<T> linear_init<T>(const Shape&, Rng&);                             \
  template struct Conv2dLayer<T>;                                                    \
  template struct LinearLayer<T>;                                                    \
  template struct LayerNormLayer<T>;                                                 \
  template struct MultiHeadAttention<T>;                                             \
  template struct TransformerLayer<T>;                                               \
  template struct MobileNetV2Block<T>;                                               \
  template struct MobileViTBlock<T>;                                                 \
  template struct PatchEmbed<T>;

MVKD_INSTANTIATE_BLOCKS(float)
MVKD_INSTANTIATE_BLOCKS(double)

#undef MVKD_INSTANTIATE_BLOCKS

}  // namespace mvkd
