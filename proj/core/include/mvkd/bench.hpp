#pragma once

#include <functional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "mvkd/model.hpp"

namespace mvkd {

// Monotonic time source in seconds. Injectable so the harness is testable
// with a deterministic fake clock.
using ClockFn = std::function<double()>;
ClockFn steady_clock_fn();

struct BenchReport {
  std::string model_id;
  std::string host;
  int threads = 1;
  int batch = 1;
  int warmup_iters = 0;
  int measured_iters = 0;
  double fps = 0;
  double p50_ms = 0, p95_ms = 0, p99_ms = 0;
  std::int64_t model_size_bytes = 0;
};

void to_json(nlohmann::json& j, const BenchReport& report);
std::string bench_csv_header();
std::string bench_csv_row(const BenchReport& report);

struct BenchOptions {
  int batch = 1;
  int warmup_iters = 20;
  int measured_iters = 100;
  int threads = 1;             // > 1 measures aggregate throughput over workers
  std::uint64_t input_seed = 1;
  ClockFn clock;               // defaults to the steady clock
};

// Timed forward passes on a fixed random input. Warmup iterations are never
// timed; fps = (measured_iters * batch * threads) / summed per-iteration
// latency (single-thread) or / max worker elapsed (multi-thread).
// Percentiles are nearest-rank over per-iteration latencies.
BenchReport bench_fps(const Model<float>& model, const BenchOptions& options = {});

struct SizeReport {
  std::int64_t param_count = 0;
  std::int64_t payload_bytes = 0;
  std::int64_t total_file_bytes = 0;
};

// Reads a checkpoint file and reports its parameter footprint.
SizeReport size_report(const std::string& checkpoint_path);

}  // namespace mvkd
