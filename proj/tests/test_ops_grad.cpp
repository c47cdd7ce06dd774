// Finite-difference gradient checks for every differentiable primitive.
// The acceptance suite re-runs these at 20 seeds; here a handful keeps the
// unit cycle fast.

#include <doctest.h>

#include "gradcheck.hpp"
#include "mvkd/losses.hpp"

using namespace mvkd;
using mvkd::testing::gradcheck;
using mvkd::testing::Scalarizer;

namespace {

constexpr double kTol = 1e-4;
constexpr int kSeeds = 5;

using LossCase = std::pair<std::vector<Tensord>, std::function<Tensord()>>;

template <typename BuildLoss>
void check_op(const char* name, BuildLoss build) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1000 + static_cast<unsigned>(seed));
    auto [leaves, make_loss] = build(rng);
    Rng pick(77 + static_cast<unsigned>(seed));
    const auto result = gradcheck(leaves, make_loss, pick);
    INFO(name << " seed " << seed << ": " << result.worst);
    CHECK(result.max_rel_error < kTol);
  }
}

}  // namespace

TEST_CASE("grad: elementwise add/sub/mul with broadcasting") {
  check_op("add", [](Rng& rng) -> LossCase {
    auto a = Tensord::uniform({3, 4}, -1, 1, rng).set_requires_grad(true);
    auto b = Tensord::uniform({4}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{a, b}, [=]() mutable { return sc(add(a, b)); }};
  });
  check_op("sub", [](Rng& rng) -> LossCase {
    auto a = Tensord::uniform({2, 3}, -1, 1, rng).set_requires_grad(true);
    auto b = Tensord::uniform({2, 3}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{a, b}, [=]() mutable { return sc(sub(a, b)); }};
  });
  check_op("mul broadcast", [](Rng& rng) -> LossCase {
    auto a = Tensord::uniform({2, 3, 4}, -1, 1, rng).set_requires_grad(true);
    auto b = Tensord::uniform({3, 1}, 0.5, 1.5, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{a, b}, [=]() mutable { return sc(mul(a, b)); }};
  });
  check_op("scalar ops", [](Rng& rng) -> LossCase {
    auto a = Tensord::uniform({5}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{a}, [=]() mutable { return sc(add_scalar(mul_scalar(a, 1.7), -0.3)); }};
  });
}

TEST_CASE("grad: matmul (plain, batched, shared operand)") {
  check_op("matmul 2d", [](Rng& rng) -> LossCase {
    auto a = Tensord::uniform({3, 4}, -1, 1, rng).set_requires_grad(true);
    auto b = Tensord::uniform({4, 2}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{a, b}, [=]() mutable { return sc(matmul(a, b)); }};
  });
  check_op("matmul batched", [](Rng& rng) -> LossCase {
    auto a = Tensord::uniform({2, 3, 4}, -1, 1, rng).set_requires_grad(true);
    auto b = Tensord::uniform({2, 4, 2}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{a, b}, [=]() mutable { return sc(matmul(a, b)); }};
  });
  check_op("matmul shared rhs", [](Rng& rng) -> LossCase {
    auto a = Tensord::uniform({2, 3, 4}, -1, 1, rng).set_requires_grad(true);
    auto b = Tensord::uniform({4, 2}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{a, b}, [=]() mutable { return sc(matmul(a, b)); }};
  });
}

TEST_CASE("grad: conv2d incl. stride, padding, groups, bias") {
  check_op("conv2d basic", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({2, 3, 6, 6}, -1, 1, rng).set_requires_grad(true);
    auto w = Tensord::uniform({4, 3, 3, 3}, -0.5, 0.5, rng).set_requires_grad(true);
    auto b = Tensord::uniform({4}, -0.5, 0.5, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x, w, b}, [=]() mutable { return sc(conv2d(x, w, b, 1, 1, 1)); }};
  });
  check_op("conv2d stride2 grouped", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({1, 4, 6, 6}, -1, 1, rng).set_requires_grad(true);
    auto w = Tensord::uniform({6, 2, 3, 3}, -0.5, 0.5, rng).set_requires_grad(true);
    auto b = Tensord::uniform({6}, -0.5, 0.5, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x, w, b}, [=]() mutable { return sc(conv2d(x, w, b, 2, 1, 2)); }};
  });
  check_op("conv2d depthwise", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({1, 3, 5, 5}, -1, 1, rng).set_requires_grad(true);
    auto w = Tensord::uniform({3, 1, 3, 3}, -0.5, 0.5, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x, w}, [=]() mutable { return sc(conv2d(x, w, Tensord(), 1, 1, 3)); }};
  });
}

TEST_CASE("grad: softmax and log_softmax at several temperatures") {
  for (double t : {0.5, 1.0, 2.0}) {
    check_op("softmax", [t](Rng& rng) -> LossCase {
      auto z = Tensord::uniform({3, 5}, -2, 2, rng).set_requires_grad(true);
      Scalarizer<double> sc(rng.next_u64());
      return {{z}, [=]() mutable { return sc(softmax(z, t)); }};
    });
  }
  check_op("log_softmax", [](Rng& rng) -> LossCase {
    auto z = Tensord::uniform({4, 3}, -2, 2, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{z}, [=]() mutable { return sc(log_softmax(z)); }};
  });
}

TEST_CASE("grad: layer_norm w.r.t. input, gamma, beta") {
  check_op("layer_norm", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({4, 6}, -2, 2, rng).set_requires_grad(true);
    auto g = Tensord::uniform({6}, 0.5, 1.5, rng).set_requires_grad(true);
    auto b = Tensord::uniform({6}, -0.5, 0.5, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x, g, b}, [=]() mutable { return sc(layer_norm(x, g, b)); }};
  });
}

TEST_CASE("grad: activations") {
  for (Activation kind : {Activation::Relu, Activation::Silu, Activation::Gelu}) {
    check_op("activation", [kind](Rng& rng) -> LossCase {
      // magnitudes bounded away from relu's kink at 0
      std::vector<double> values(24);
      for (auto& v : values) {
        v = rng.uniform(0.05, 2.0) * (rng.next_double() < 0.5 ? -1.0 : 1.0);
      }
      auto x = Tensord::from_data({24}, values).set_requires_grad(true);
      Scalarizer<double> sc(rng.next_u64());
      return {{x}, [=]() mutable { return sc(activation(x, kind)); }};
    });
  }
}

TEST_CASE("grad: unfold/fold, reductions, layout ops") {
  check_op("unfold+fold", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({1, 2, 4, 4}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x}, [=]() mutable { return sc(fold_patches(unfold_patches(x, 2), 2, 4, 4)); }};
  });
  check_op("reduce sum", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({3, 4, 2}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x}, [=]() mutable { return sc(reduce(x, Reduce::Sum, {1})); }};
  });
  check_op("reduce mean keepdims", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({2, 3, 4}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x}, [=]() mutable { return sc(reduce(x, Reduce::Mean, {0, 2}, true)); }};
  });
  check_op("reduce max", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({3, 5}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x}, [=]() mutable { return sc(reduce(x, Reduce::Max, {1})); }};
  });
  check_op("global_avg_pool", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({2, 3, 4, 4}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x}, [=]() mutable { return sc(global_avg_pool(x)); }};
  });
  check_op("permute+reshape+slice+concat", [](Rng& rng) -> LossCase {
    auto x = Tensord::uniform({2, 3, 4}, -1, 1, rng).set_requires_grad(true);
    Scalarizer<double> sc(rng.next_u64());
    return {{x}, [=]() mutable {
              auto t = permute(x, {2, 0, 1});
              t = reshape(t, {4, 6});
              t = concat(std::vector<Tensord>{slice(t, 0, 0, 2), slice(t, 0, 1, 3)}, 0);
              return sc(t);
            }};
  });
}

TEST_CASE("grad: losses") {
  check_op("cross_entropy", [](Rng& rng) -> LossCase {
    auto z = Tensord::uniform({4, 5}, -2, 2, rng).set_requires_grad(true);
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.below(5)));
    return {{z}, [=]() { return cross_entropy(z, labels); }};
  });
  check_op("kl_divergence via softmax parents", [](Rng& rng) -> LossCase {
    auto zt = Tensord::uniform({3, 4}, -2, 2, rng);
    auto zs = Tensord::uniform({3, 4}, -2, 2, rng).set_requires_grad(true);
    return {{zs}, [=]() { return kl_divergence(softmax(zt), softmax(zs)); }};
  });
  check_op("kd_total_loss", [](Rng& rng) -> LossCase {
    auto zs = Tensord::uniform({3, 4}, -2, 2, rng).set_requires_grad(true);
    auto zt = Tensord::uniform({3, 4}, -2, 2, rng).set_requires_grad(true);
    std::vector<int> labels;
    for (int i = 0; i < 3; ++i) labels.push_back(static_cast<int>(rng.below(4)));
    return {{zs}, [=]() { return kd_total_loss(zs, zt, labels, 2.0, 0.3); }};
  });
}

TEST_CASE("grad: kd teacher side receives exactly zero gradient") {
  Rng rng(2024);
  auto zs = Tensord::uniform({3, 4}, -2, 2, rng).set_requires_grad(true);
  auto zt = Tensord::uniform({3, 4}, -2, 2, rng).set_requires_grad(true);
  std::vector<int> labels{0, 1, 2};
  kd_total_loss(zs, zt, labels, 2.0, 0.5).backward();
  CHECK(zs.has_grad());
  CHECK_FALSE(zt.has_grad());  // detached: not even touched
}
