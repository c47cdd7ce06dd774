#include <doctest.h>

#include <cmath>

#include "mvkd/ops.hpp"

using namespace mvkd;

TEST_CASE("matmul: identity and hand product") {
  auto eye = Tensord::from_data({2, 2}, {1, 0, 0, 1});
  Rng rng(5);
  auto a = Tensord::uniform({2, 2}, -2.0, 2.0, rng);
  CHECK(matmul(eye, a).data() == a.data());

  auto lhs = Tensord::from_data({2, 2}, {1, 2, 3, 4});
  auto rhs = Tensord::from_data({2, 2}, {5, 6, 7, 8});
  const auto out = matmul(lhs, rhs).data();
  // hand multiplication oracle
  CHECK(out == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul: batched and shared operands") {
  Rng rng(6);
  auto a = Tensord::uniform({3, 2, 4}, -1.0, 1.0, rng);
  auto b = Tensord::uniform({4, 5}, -1.0, 1.0, rng);
  auto out = matmul(a, b);
  CHECK(out.shape() == Shape{3, 2, 5});
  // batch 1 equals its standalone 2-d product
  auto a1 = Tensord::from_data({2, 4}, std::vector<double>(a.data().begin() + 8, a.data().begin() + 16));
  auto expect = matmul(a1, b).data();
  for (int i = 0; i < 10; ++i) CHECK(out.data()[10 + i] == doctest::Approx(expect[i]).epsilon(1e-12));

  CHECK_THROWS_AS(matmul(Tensord::ones({2, 3}), Tensord::ones({4, 2})), Error);
}

TEST_CASE("conv2d: identity kernel, constant field, dot product") {
  Rng rng(7);
  auto x = Tensord::uniform({1, 1, 5, 5}, -1.0, 1.0, rng);
  auto w = Tensord::ones({1, 1, 1, 1});
  auto y = conv2d(x, w, Tensord::zeros({1}));
  CHECK(y.data() == x.data());

  // constant input, 3x3 ones kernel, no padding -> constant 9c
  auto c = Tensord::full({1, 1, 4, 4}, 0.5);
  auto k = Tensord::ones({1, 1, 3, 3});
  auto out = conv2d(c, k, Tensord::zeros({1}));
  CHECK(out.shape() == Shape{1, 1, 2, 2});
  for (double v : out.data()) CHECK(v == doctest::Approx(4.5).epsilon(1e-12));

  // 2x2 valid conv on a 2x2 input = elementwise dot product
  auto xs = Tensord::uniform({1, 1, 2, 2}, -1.0, 1.0, rng);
  auto ks = Tensord::uniform({1, 1, 2, 2}, -1.0, 1.0, rng);
  double dot = 0;
  for (int i = 0; i < 4; ++i) dot += xs.data()[i] * ks.data()[i];
  auto scalar_out = conv2d(xs, ks, Tensord());
  CHECK(scalar_out.shape() == Shape{1, 1, 1, 1});
  CHECK(scalar_out.data()[0] == doctest::Approx(dot).epsilon(1e-12));
}

TEST_CASE("conv2d: stride/padding shape contract and group errors") {
  Rng rng(8);
  auto x = Tensord::uniform({2, 4, 8, 8}, -1.0, 1.0, rng);
  auto w = Tensord::uniform({6, 2, 3, 3}, -0.5, 0.5, rng);
  auto y = conv2d(x, w, Tensord::zeros({6}), /*stride=*/2, /*padding=*/1, /*groups=*/2);
  CHECK(y.shape() == Shape{2, 6, 4, 4});

  CHECK_THROWS_AS(conv2d(x, Tensord::ones({6, 3, 3, 3}), Tensord(), 1, 1, 2), Error);
  try {
    conv2d(x, Tensord::ones({5, 2, 3, 3}), Tensord(), 1, 1, 2);  // 5 % 2 != 0
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("conv2d: depthwise groups match per-channel convolution") {
  Rng rng(9);
  auto x = Tensord::uniform({1, 3, 6, 6}, -1.0, 1.0, rng);
  auto w = Tensord::uniform({3, 1, 3, 3}, -0.5, 0.5, rng);
  auto y = conv2d(x, w, Tensord(), 1, 1, 3);
  for (int c = 0; c < 3; ++c) {
    auto xc = Tensord::from_data({1, 1, 6, 6},
                                 {x.data().begin() + c * 36, x.data().begin() + (c + 1) * 36});
    auto wc = Tensord::from_data({1, 1, 3, 3},
                                 {w.data().begin() + c * 9, w.data().begin() + (c + 1) * 9});
    auto yc = conv2d(xc, wc, Tensord(), 1, 1, 1);
    for (int i = 0; i < 36; ++i) {
      CHECK(y.data()[c * 36 + i] == doctest::Approx(yc.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax: symmetry, temperature, argmax preservation") {
  auto z = Tensord::from_data({2}, {1, 1});
  auto p = softmax(z);
  CHECK(p.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.data()[1] == doctest::Approx(0.5).epsilon(1e-12));

  // softmax([2,0], T=2) == softmax([1,0]); frozen from exp(1)/(exp(1)+1)
  auto q = softmax(Tensord::from_data({2}, {2, 0}), 2.0);
  CHECK(q.data()[0] == doctest::Approx(0.7310585786300049).epsilon(1e-9));
  CHECK(q.data()[1] == doctest::Approx(0.2689414213699951).epsilon(1e-9));

  Rng rng(10);
  for (double t : {0.5, 1.0, 2.0, 10.0}) {
    auto logits = Tensord::uniform({4, 6}, -3.0, 3.0, rng);
    auto probs = softmax(logits, t);
    for (int r = 0; r < 4; ++r) {
      double sum = 0;
      int argmax_z = 0, argmax_p = 0;
      for (int i = 0; i < 6; ++i) {
        sum += probs.data()[r * 6 + i];
        CHECK(probs.data()[r * 6 + i] > 0.0);
        if (logits.data()[r * 6 + i] > logits.data()[r * 6 + argmax_z]) argmax_z = i;
        if (probs.data()[r * 6 + i] > probs.data()[r * 6 + argmax_p]) argmax_p = i;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(argmax_z == argmax_p);
    }
  }

  CHECK_THROWS_AS(softmax(z, 0.0), Error);
  CHECK_THROWS_AS(softmax(z, -1.0), Error);
}

TEST_CASE("softmax: stable under large logits") {
  auto p = softmax(Tensord::from_data({2}, {1000.0, 998.0}));
  CHECK(std::isfinite(p.data()[0]));
  CHECK(p.data()[0] + p.data()[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.data()[0] == doctest::Approx(std::exp(2.0) / (1 + std::exp(2.0))).epsilon(1e-9));
}

TEST_CASE("log_softmax matches log of softmax") {
  Rng rng(11);
  auto z = Tensord::uniform({3, 5}, -4.0, 4.0, rng);
  auto ls = log_softmax(z);
  auto p = softmax(z);
  for (std::size_t i = 0; i < ls.data().size(); ++i) {
    CHECK(ls.data()[i] == doctest::Approx(std::log(p.data()[i])).epsilon(1e-10));
  }
}

TEST_CASE("layer_norm: closed-form, zero-variance, affine dominance") {
  auto gamma = Tensord::ones({3});
  auto beta = Tensord::zeros({3});
  auto y = layer_norm(Tensord::from_data({3}, {1, 2, 3}), gamma, beta, 1e-10);
  CHECK(y.data()[0] == doctest::Approx(-1.224744871).epsilon(1e-6));
  CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(y.data()[2] == doctest::Approx(1.224744871).epsilon(1e-6));

  auto constant = layer_norm(Tensord::full({4}, 3.3), Tensord::ones({4}), Tensord::zeros({4}));
  for (double v : constant.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

  auto fives = layer_norm(Tensord::from_data({2}, {1, 9}), Tensord::zeros({2}), Tensord::full({2}, 5.0));
  for (double v : fives.data()) CHECK(v == doctest::Approx(5.0).epsilon(1e-12));

  // mean ~0, var ~1 before affine on random rows
  Rng rng(12);
  auto x = Tensord::uniform({6, 16}, -5.0, 5.0, rng);
  auto n = layer_norm(x, Tensord::ones({16}), Tensord::zeros({16}), 1e-9);
  for (int r = 0; r < 6; ++r) {
    double mean = 0, var = 0;
    for (int i = 0; i < 16; ++i) mean += n.data()[r * 16 + i];
    mean /= 16;
    for (int i = 0; i < 16; ++i) {
      const double c = n.data()[r * 16 + i] - mean;
      var += c * c;
    }
    var /= 16;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("activations: fixed points and the erf-form gelu") {
  auto x = Tensord::from_data({4}, {-1.0, 2.0, 0.0, 1.0});
  auto r = relu(x);
  CHECK(r.data() == std::vector<double>{0, 2, 0, 1});
  CHECK(silu(x).data()[2] == 0.0);
  // frozen from 0.5 * (1 + erf(1/sqrt(2))) at 64-bit
  CHECK(gelu(x).data()[3] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
}

TEST_CASE("unfold_patches: hand index map on a ramp image") {
  std::vector<double> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[static_cast<std::size_t>(i)] = i;
  auto x = Tensord::from_data({1, 1, 4, 4}, ramp);
  auto t = unfold_patches(x, 2);
  CHECK(t.shape() == Shape{1, 4, 4, 1});
  // patch 0 = rows 0-1, cols 0-1 in row-major pixel order
  CHECK(t.data() == std::vector<double>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15});
}

TEST_CASE("fold(unfold) is the exact identity; degenerate single patch") {
  Rng rng(13);
  for (auto [h, w, p] : {std::tuple{4, 4, 2}, {6, 4, 2}, {9, 9, 3}, {5, 5, 5}}) {
    auto x = Tensorf::uniform({2, 3, h, w}, -1.0, 1.0, rng);
    auto round = fold_patches(unfold_patches(x, p), p, h, w);
    CHECK(round.data() == x.data());  // bit-equal
  }
  auto x = Tensord::uniform({1, 2, 3, 3}, -1.0, 1.0, rng);
  auto t = unfold_patches(x, 3);
  CHECK(t.shape() == Shape{1, 1, 9, 2});

  CHECK_THROWS_AS(unfold_patches(x, 2), Error);
  try {
    unfold_patches(x, 2);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PatchMismatch);
  }
  CHECK_THROWS_AS(fold_patches(t, 3, 4, 3), Error);
}

TEST_CASE("reduce: mean, sum/mean identity, max ties to first") {
  auto x = Tensord::from_data({3}, {1, 2, 3});
  CHECK(reduce_all(x, Reduce::Mean).item() == doctest::Approx(2.0).epsilon(1e-12));

  Rng rng(14);
  auto img = Tensord::uniform({2, 3, 4, 5}, -1.0, 1.0, rng);
  auto s = reduce(img, Reduce::Sum, {2, 3});
  auto m = reduce(img, Reduce::Mean, {2, 3});
  for (std::size_t i = 0; i < s.data().size(); ++i) {
    CHECK(s.data()[i] == doctest::Approx(20.0 * m.data()[i]).epsilon(1e-9));
  }

  // first maximal element wins the tie
  auto ties = Tensord::from_data({2, 2}, {5, 5, 1, 5});
  ties.set_requires_grad(true);
  auto mx = reduce(ties, Reduce::Max, {1});
  CHECK(mx.data() == std::vector<double>{5, 5});
  reduce_all(mx, Reduce::Sum).backward();
  CHECK(ties.grad() == std::vector<double>{1, 0, 0, 1});

  CHECK_THROWS_AS(reduce(x, Reduce::Sum, {3}), Error);
  try {
    reduce(x, Reduce::Sum, {-4});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidAxis);
  }
}

TEST_CASE("global_avg_pool: constant map passes through") {
  auto x = Tensord::full({2, 3, 4, 4}, 0.75);
  auto pooled = global_avg_pool(x);
  CHECK(pooled.shape() == Shape{2, 3});
  for (double v : pooled.data()) CHECK(v == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("broadcast add/mul rules") {
  auto a = Tensord::from_data({2, 2}, {1, 2, 3, 4});
  auto bias = Tensord::from_data({2}, {10, 20});
  CHECK(add(a, bias).data() == std::vector<double>{11, 22, 13, 24});
  CHECK(mul(a, Tensord::from_data({2, 1}, {2, 3})).data() == std::vector<double>{2, 4, 9, 12});
  CHECK_THROWS_AS(add(a, Tensord::ones({3})), Error);
}

TEST_CASE("permute/reshape/concat/slice basics") {
  auto x = Tensord::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(permute(x, {1, 0}).data() == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(reshape(x, {3, 2}).data() == x.data());
  CHECK_THROWS_AS(reshape(x, {4, 2}), Error);
  CHECK_THROWS_AS(permute(x, {0, 0}), Error);

  auto c = concat(std::vector<Tensord>{x, x}, 1);
  CHECK(c.shape() == Shape{2, 6});
  CHECK(slice(c, 1, 3, 3).data() == x.data());
  CHECK_THROWS_AS(slice(x, 1, 2, 5), Error);
}
