#include <doctest.h>

#include "mvkd/ops.hpp"

using namespace mvkd;

TEST_CASE("create: zeros, constant, determinism") {
  auto z = Tensord::zeros({2, 2});
  CHECK(z.shape() == Shape{2, 2});
  for (double v : z.data()) CHECK(v == 0.0);

  auto c = Tensord::full({3}, 2.5);
  CHECK(c.data() == std::vector<double>{2.5, 2.5, 2.5});

  Rng a(7), b(7);
  auto u1 = Tensord::uniform({4}, 0.0, 1.0, a);
  auto u2 = Tensord::uniform({4}, 0.0, 1.0, b);
  CHECK(u1.data() == u2.data());  // bit-identical
  for (double v : u1.data()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("create: invalid arguments") {
  CHECK_THROWS_AS(Tensord::zeros({2, 0}), Error);
  CHECK_THROWS_AS(Tensord::zeros({-1}), Error);
  try {
    Tensord::zeros({0});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidShape);
  }
  Rng rng(1);
  CHECK_THROWS_AS(Tensord::uniform({2}, 1.0, 1.0, rng), Error);
  CHECK_THROWS_AS(Tensord::normal({2}, 0.0, -1.0, rng), Error);
  CHECK_THROWS_AS(Tensord::from_data({3}, {1.0, 2.0}), Error);
}

TEST_CASE("rng: streams are independent and platform-stable") {
  Rng root(42);
  Rng init1 = root.stream("init");
  Rng init2 = Rng(42).stream("init");
  Rng shuffle = root.stream("shuffle");
  CHECK(init1.next_u64() == init2.next_u64());
  CHECK(Rng(42).stream("init").next_u64() != shuffle.next_u64());
  // indexed streams differ
  CHECK(root.stream("synth", 0, 1).next_u64() != root.stream("synth", 1, 0).next_u64());
}

TEST_CASE("backward: sum gives unit gradients") {
  Rng rng(3);
  auto x = Tensord::uniform({2, 3}, -1.0, 1.0, rng);
  x.set_requires_grad(true);
  reduce_all(x, Reduce::Sum).backward();
  REQUIRE(x.has_grad());
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: sum of squares") {
  auto x = Tensord::from_data({2}, {1.0, -2.0});
  x.set_requires_grad(true);
  reduce_all(mul(x, x), Reduce::Sum).backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("backward: repeated calls accumulate, zero_grad clears") {
  auto x = Tensord::ones({3});
  x.set_requires_grad(true);
  auto loss = [&] { return reduce_all(x, Reduce::Sum); };
  loss().backward();
  loss().backward();
  for (double g : x.grad()) CHECK(g == 2.0);
  x.zero_grad();
  loss().backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: rejects non-scalar loss") {
  auto x = Tensord::ones({2});
  x.set_requires_grad(true);
  auto y = mul_scalar(x, 2.0);
  CHECK_THROWS_AS(y.backward(), Error);
  try {
    y.backward();
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidBackward);
  }
}

TEST_CASE("backward: diamond-shaped graph accumulates both paths") {
  auto x = Tensord::from_data({1}, {3.0});
  x.set_requires_grad(true);
  // loss = x*x + 2x -> dloss/dx = 2x + 2 = 8
  auto loss = add(reduce_all(mul(x, x), Reduce::Sum), reduce_all(mul_scalar(x, 2.0), Reduce::Sum));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("detach cuts the graph; NoGradGuard suppresses recording") {
  auto x = Tensord::ones({2});
  x.set_requires_grad(true);
  auto d = x.detach();
  CHECK_FALSE(d.requires_grad());
  reduce_all(mul(d, d), Reduce::Sum).backward();  // no-op, no throw
  CHECK_FALSE(x.has_grad());

  {
    NoGradGuard guard;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  auto y = mul(x, x);
  CHECK(y.requires_grad());
}

TEST_CASE("determinism: identical seeds give bit-identical op pipelines") {
  auto run = [] {
    Rng rng(11);
    auto a = Tensorf::normal({4, 4}, 0.0, 1.0, rng);
    auto b = Tensorf::uniform({4, 4}, -1.0, 1.0, rng);
    return softmax(matmul(a, b)).data();
  };
  CHECK(run() == run());
}
