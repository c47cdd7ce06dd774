#include <benchmark/benchmark.h>

#include "mvkd/model.hpp"
#include "mvkd/ops.hpp"

using namespace mvkd;

namespace {

void BM_matmul_f32(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(1);
  auto a = Tensorf::uniform({n, n}, -1.0, 1.0, rng);
  auto b = Tensorf::uniform({n, n}, -1.0, 1.0, rng);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b).data().data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_matmul_f32)->Arg(64)->Arg(128)->Arg(256);

void BM_conv2d_f32(benchmark::State& state) {
  const auto c = state.range(0);
  Rng rng(2);
  auto x = Tensorf::uniform({1, c, 32, 32}, -1.0, 1.0, rng);
  auto w = Tensorf::uniform({c, c, 3, 3}, -0.2, 0.2, rng);
  auto bias = Tensorf::zeros({c});
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, bias, 1, 1, 1).data().data());
  }
}
BENCHMARK(BM_conv2d_f32)->Arg(8)->Arg(32);

void BM_softmax_rows(benchmark::State& state) {
  Rng rng(3);
  auto z = Tensorf::uniform({256, 128}, -4.0, 4.0, rng);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax(z, 2.0).data().data());
  }
}
BENCHMARK(BM_softmax_rows);

void BM_student_forward_desk(benchmark::State& state) {
  const ModelConfig cfg = ModelConfig::desk(ModelKind::StudentS, 2);
  const auto model = Model<float>::build(cfg, 7);
  Rng rng(4);
  auto x = Tensorf::uniform({1, 3, cfg.input_h, cfg.input_w}, 0.0, 1.0, rng);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(x).data().data());
  }
}
BENCHMARK(BM_student_forward_desk);

void BM_teacher_forward_desk(benchmark::State& state) {
  const ModelConfig cfg = ModelConfig::desk(ModelKind::TeacherVit32, 2);
  const auto model = Model<float>::build(cfg, 7);
  Rng rng(5);
  auto x = Tensorf::uniform({1, 3, cfg.input_h, cfg.input_w}, 0.0, 1.0, rng);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(x).data().data());
  }
}
BENCHMARK(BM_teacher_forward_desk);

}  // namespace

BENCHMARK_MAIN();
