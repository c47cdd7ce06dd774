#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "mvkd/blocks.hpp"

using namespace mvkd;
using mvkd::testing::gradcheck;
using mvkd::testing::Scalarizer;

namespace {

void set_data(Tensor<double>& t, const std::vector<double>& values) {
  REQUIRE(t.size() == static_cast<std::int64_t>(values.size()));
  t.mutable_data() = values;
}

void zero_out(Tensor<double>& t) { set_data(t, std::vector<double>(t.data().size(), 0.0)); }

// Brute-force multi-head attention: explicit loops over tokens and heads.
std::vector<double> attention_by_hand(const MultiHeadAttention<double>& mha,
                                      const std::vector<double>& x, int n, int d) {
  const int h = mha.heads;
  const int dh = d / h;
  auto project = [&](const LinearLayer<double>& lin, int token) {
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j) {
      double acc = lin.bias.data()[static_cast<std::size_t>(j)];
      for (int i = 0; i < d; ++i) acc += x[static_cast<std::size_t>(token * d + i)] * lin.weight.data()[static_cast<std::size_t>(i * d + j)];
      out[static_cast<std::size_t>(j)] = acc;
    }
    return out;
  };
  std::vector<std::vector<double>> q, k, v;
  for (int t = 0; t < n; ++t) {
    q.push_back(project(mha.q, t));
    k.push_back(project(mha.k, t));
    v.push_back(project(mha.v, t));
  }
  std::vector<double> ctx(static_cast<std::size_t>(n * d), 0.0);
  for (int hh = 0; hh < h; ++hh) {
    for (int ti = 0; ti < n; ++ti) {
      std::vector<double> scores(static_cast<std::size_t>(n));
      double mx = -1e300;
      for (int tj = 0; tj < n; ++tj) {
        double dot = 0;
        for (int e = 0; e < dh; ++e) dot += q[ti][hh * dh + e] * k[tj][hh * dh + e];
        scores[static_cast<std::size_t>(tj)] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, scores[static_cast<std::size_t>(tj)]);
      }
      double sum = 0;
      for (auto& s : scores) {
        s = std::exp(s - mx);
        sum += s;
      }
      double row_total = 0;
      for (auto& s : scores) {
        s /= sum;
        row_total += s;
      }
      CHECK(row_total == doctest::Approx(1.0).epsilon(1e-6));  // attention rows sum to 1
      for (int e = 0; e < dh; ++e) {
        double acc = 0;
        for (int tj = 0; tj < n; ++tj) acc += scores[static_cast<std::size_t>(tj)] * v[tj][hh * dh + e];
        ctx[static_cast<std::size_t>(ti * d + hh * dh + e)] = acc;
      }
    }
  }
  // output projection
  std::vector<double> out(static_cast<std::size_t>(n * d), 0.0);
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j < d; ++j) {
      double acc = mha.out.bias.data()[static_cast<std::size_t>(j)];
      for (int i = 0; i < d; ++i) acc += ctx[static_cast<std::size_t>(t * d + i)] * mha.out.weight.data()[static_cast<std::size_t>(i * d + j)];
      out[static_cast<std::size_t>(t * d + j)] = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("mobilenetv2 block: residual passthrough with zeroed projection") {
  ParamStore<double> params;
  Rng rng(1);
  MobileNetV2Block<double> block(params, "b", 4, 4, 2, 1, rng);
  zero_out(block.project.weight);
  zero_out(block.project.bias);
  auto x = Tensord::uniform({1, 4, 6, 6}, -1.0, 1.0, rng);
  CHECK(block.forward(x).data() == x.data());
}

TEST_CASE("mobilenetv2 block: stride 2 halves spatial dims, no residual") {
  ParamStore<double> params;
  Rng rng(2);
  MobileNetV2Block<double> block(params, "b", 4, 4, 2, 2, rng);
  auto x = Tensord::uniform({2, 4, 8, 8}, -1.0, 1.0, rng);
  auto y = block.forward(x);
  CHECK(y.shape() == Shape{2, 4, 4, 4});
  CHECK_FALSE(block.use_residual);
  CHECK_THROWS_AS(MobileNetV2Block<double>(params, "bad", 4, 4, 2, 3, rng), Error);
}

TEST_CASE("mobilenetv2 block: equals straight-line conv composition") {
  ParamStore<double> params;
  Rng rng(3);
  MobileNetV2Block<double> block(params, "b", 3, 5, 4, 2, rng);
  auto x = Tensord::uniform({1, 3, 6, 6}, -1.0, 1.0, rng);
  auto y = block.forward(x);

  auto h = silu(conv2d(x, block.expand.weight, block.expand.bias, 1, 0, 1));
  h = silu(conv2d(h, block.depthwise.weight, block.depthwise.bias, 2, 1, 12));
  h = conv2d(h, block.project.weight, block.project.bias, 1, 0, 1);
  REQUIRE(y.shape() == h.shape());
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(h.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("attention: single token attends only to itself") {
  ParamStore<double> params;
  Rng rng(4);
  MultiHeadAttention<double> mha(params, "attn", 4, 2, rng);
  auto x = Tensord::uniform({1, 1, 4}, -1.0, 1.0, rng);
  auto y = mha.forward(x);
  // with one key the softmax weight is exactly 1: output = W_o(W_v x + b_v) + b_o
  auto v = add(matmul(x, mha.v.weight), mha.v.bias);
  auto expect = add(matmul(v, mha.out.weight), mha.out.bias);
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-9));
  }
}

TEST_CASE("attention: identical keys give uniform weights (mean of values)") {
  ParamStore<double> params;
  Rng rng(5);
  MultiHeadAttention<double> mha(params, "attn", 4, 2, rng);
  // two identical tokens -> identical keys -> uniform attention
  std::vector<double> token{0.3, -0.7, 1.1, 0.2};
  std::vector<double> both = token;
  both.insert(both.end(), token.begin(), token.end());
  auto x = Tensord::from_data({1, 2, 4}, both);
  auto y = mha.forward(x);
  auto hand = attention_by_hand(mha, both, 2, 4);
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(hand[i]).epsilon(1e-9));
  }
  // both rows equal since inputs are identical
  for (int j = 0; j < 4; ++j) {
    CHECK(y.data()[static_cast<std::size_t>(j)] == doctest::Approx(y.data()[static_cast<std::size_t>(4 + j)]).epsilon(1e-12));
  }
}

TEST_CASE("attention: brute-force oracle on random input (B=1,N=3,d=4,h=2)") {
  ParamStore<double> params;
  Rng rng(6);
  MultiHeadAttention<double> mha(params, "attn", 4, 2, rng);
  auto x = Tensord::uniform({1, 3, 4}, -1.0, 1.0, rng);
  auto y = mha.forward(x);
  auto hand = attention_by_hand(mha, x.data(), 3, 4);
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(hand[i]).epsilon(1e-6));
  }
  CHECK_THROWS_AS(MultiHeadAttention<double>(params, "bad", 5, 2, rng), Error);
}

TEST_CASE("transformer layer: zeroed residual branches give the identity") {
  ParamStore<double> params;
  Rng rng(7);
  TransformerLayer<double> layer(params, "enc", 6, 2, 2.0, Activation::Gelu, rng);
  zero_out(layer.attn.out.weight);
  zero_out(layer.attn.out.bias);
  zero_out(layer.fc2.weight);
  zero_out(layer.fc2.bias);
  auto x = Tensord::uniform({2, 3, 6}, -1.0, 1.0, rng);
  CHECK(layer.forward(x).data() == x.data());
}

TEST_CASE("transformer layer: shape preserved and equals manual composition") {
  ParamStore<double> params;
  Rng rng(8);
  TransformerLayer<double> layer(params, "enc", 8, 2, 1.5, Activation::Silu, rng);
  auto x = Tensord::uniform({2, 5, 8}, -1.0, 1.0, rng);
  auto y = layer.forward(x);
  CHECK(y.shape() == x.shape());

  auto h = add(x, layer.attn.forward(layer.norm1.forward(x)));
  auto m = add(h, layer.fc2.forward(silu(layer.fc1.forward(layer.norm2.forward(h)))));
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(m.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("mobilevit block: output shape equals input shape") {
  ParamStore<double> params;
  Rng rng(9);
  MobileViTBlock<double> block(params, "mvit", 6, 8, 2, 2, 2, 1.0, rng);
  auto x = Tensord::uniform({2, 6, 8, 8}, -1.0, 1.0, rng);
  CHECK(block.forward(x).shape() == x.shape());

  auto bad = Tensord::uniform({1, 6, 7, 8}, -1.0, 1.0, rng);
  CHECK_THROWS_AS(block.forward(bad), Error);
  try {
    block.forward(bad);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PatchMismatch);
  }
}

TEST_CASE("mobilevit block: zeroed transformer residuals reduce to the conv path") {
  ParamStore<double> params;
  Rng rng(10);
  MobileViTBlock<double> block(params, "mvit", 4, 6, 2, 2, 2, 1.0, rng);
  for (auto& layer : block.layers) {
    zero_out(layer.attn.out.weight);
    zero_out(layer.attn.out.bias);
    zero_out(layer.fc2.weight);
    zero_out(layer.fc2.bias);
  }
  auto x = Tensord::uniform({1, 4, 6, 6}, -1.0, 1.0, rng);
  auto y = block.forward(x);

  // conv path: local 3x3 -> proj to d -> (identity token mix) -> proj back
  // -> concat with input -> fusion
  auto h = silu(conv2d(x, block.local_conv.weight, block.local_conv.bias, 1, 1, 1));
  h = conv2d(h, block.proj_in.weight, block.proj_in.bias, 1, 0, 1);
  h = conv2d(h, block.proj_out.weight, block.proj_out.bias, 1, 0, 1);
  h = silu(conv2d(concat(std::vector<Tensord>{x, h}, 1), block.fusion.weight, block.fusion.bias, 1, 1, 1));
  REQUIRE(y.shape() == h.shape());
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(h.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("mobilevit block: permuting input patches permutes output patches") {
  ParamStore<double> params;
  Rng rng(11);
  const int c = 3;
  MobileViTBlock<double> block(params, "mvit", c, c, 1, 2, 1, 1.0, rng);
  // local conv := 3x3 delta kernel (identity); projections := 1x1 identity;
  // fusion := 1x1-style selector that forwards the transformer branch.
  auto delta3 = [&](Tensor<double>& w) {
    std::vector<double> values(w.data().size(), 0.0);
    for (int o = 0; o < c; ++o) values[static_cast<std::size_t>(((o * c + o) * 3 + 1) * 3 + 1)] = 1.0;
    set_data(w, values);
  };
  auto eye1 = [&](Tensor<double>& w) {
    std::vector<double> values(w.data().size(), 0.0);
    for (int o = 0; o < c; ++o) values[static_cast<std::size_t>(o * c + o)] = 1.0;
    set_data(w, values);
  };
  delta3(block.local_conv.weight);
  zero_out(block.local_conv.bias);
  eye1(block.proj_in.weight);
  zero_out(block.proj_in.bias);
  eye1(block.proj_out.weight);
  zero_out(block.proj_out.bias);
  {
    // fusion [C, 2C, 3, 3]: center tap picks channel C+o (the token branch)
    std::vector<double> values(block.fusion.weight.data().size(), 0.0);
    for (int o = 0; o < c; ++o) {
      values[static_cast<std::size_t>(((o * 2 * c + c + o) * 3 + 1) * 3 + 1)] = 1.0;
    }
    set_data(block.fusion.weight, values);
    zero_out(block.fusion.bias);
  }
  for (auto& layer : block.layers) {
    zero_out(layer.attn.out.weight);
    zero_out(layer.attn.out.bias);
    zero_out(layer.fc2.weight);
    zero_out(layer.fc2.bias);
  }

  Rng data_rng(12);
  auto x = Tensord::uniform({1, c, 4, 4}, -1.0, 1.0, data_rng);
  auto y1 = block.forward(x);

  // swap patches (0,0) and (1,1) in the 2x2 patch grid of every channel
  auto swapped = x.data();
  const auto swap_patch = [&](int py, int px, int qy, int qx) {
    for (int ch = 0; ch < c; ++ch) {
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::size_t a = static_cast<std::size_t>((ch * 4 + py * 2 + dy) * 4 + px * 2 + dx);
          const std::size_t b = static_cast<std::size_t>((ch * 4 + qy * 2 + dy) * 4 + qx * 2 + dx);
          std::swap(swapped[a], swapped[b]);
        }
      }
    }
  };
  swap_patch(0, 0, 1, 1);
  auto y2 = block.forward(Tensord::from_data({1, c, 4, 4}, swapped));

  // outputs must be the same patch swap of each other
  auto y2_swapped = y2.data();
  {
    std::vector<double>& buf = y2_swapped;
    for (int ch = 0; ch < c; ++ch) {
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::size_t a = static_cast<std::size_t>((ch * 4 + 0 * 2 + dy) * 4 + 0 * 2 + dx);
          const std::size_t b = static_cast<std::size_t>((ch * 4 + 1 * 2 + dy) * 4 + 1 * 2 + dx);
          std::swap(buf[a], buf[b]);
        }
      }
    }
  }
  for (std::size_t i = 0; i < y1.data().size(); ++i) {
    CHECK(y1.data()[i] == doctest::Approx(y2_swapped[i]).epsilon(1e-9));
  }
}

TEST_CASE("patch_embed: token counts, additive structure, single-patch oracle") {
  ParamStore<double> params;
  Rng rng(13);
  PatchEmbed<double> embed(params, "embed", 32, 224, 224, 16, rng);
  auto x = Tensord::zeros({1, 3, 224, 224});
  auto tokens = embed.forward(x);
  CHECK(tokens.shape() == Shape{1, 50, 16});  // 7*7 patches + class token

  // zero image and zero projection/class token -> tokens equal pos embeddings
  zero_out(embed.proj.weight);
  zero_out(embed.proj.bias);
  zero_out(embed.cls_token);
  auto t2 = embed.forward(x);
  CHECK(t2.data() == embed.pos_embed.data());

  // single-patch image: token = proj(flatten(x)) + pos_1
  ParamStore<double> params_s;
  PatchEmbed<double> small(params_s, "embed", 4, 4, 4, 6, rng);
  auto img = Tensord::uniform({1, 3, 4, 4}, -1.0, 1.0, rng);
  auto out = small.forward(img);
  CHECK(out.shape() == Shape{1, 2, 6});
  auto flat = reshape(unfold_patches(img, 4), {1, 1, 48});
  auto expect = add(add(matmul(flat, small.proj.weight), small.proj.bias),
                    slice(small.pos_embed, 1, 1, 1));
  for (int j = 0; j < 6; ++j) {
    CHECK(out.data()[static_cast<std::size_t>(6 + j)] ==
          doctest::Approx(expect.data()[static_cast<std::size_t>(j)]).epsilon(1e-9));
  }

  CHECK_THROWS_AS(PatchEmbed<double>(params_s, "bad", 32, 100, 100, 8, rng), Error);
}

TEST_CASE("grad: every block backpropagates correctly (spot check)") {
  for (int seed = 0; seed < 2; ++seed) {
    ParamStore<double> params;
    Rng rng(500 + static_cast<unsigned>(seed));
    MobileNetV2Block<double> mv2(params, "mv2", 3, 4, 2, 1, rng);
    MobileViTBlock<double> mvit(params, "mvit", 4, 6, 1, 2, 2, 1.0, rng);
    auto x = Tensord::uniform({1, 3, 4, 4}, -1.0, 1.0, rng).set_requires_grad(true);

    std::vector<Tensord> leaves{x};
    for (const auto& [name, t] : params.entries()) leaves.push_back(t);
    Scalarizer<double> sc(rng.next_u64());
    auto make_loss = [&]() mutable { return sc(mvit.forward(mv2.forward(x))); };
    Rng pick(900 + static_cast<unsigned>(seed));
    const auto result = gradcheck(leaves, make_loss, pick, /*max_coords=*/4);
    INFO(result.worst);
    CHECK(result.max_rel_error < 1e-4);
  }
}
