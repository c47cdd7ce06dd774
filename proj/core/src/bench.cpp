#include "mvkd/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "mvkd/checkpoint.hpp"

namespace mvkd {

ClockFn steady_clock_fn() {
  return [] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  };
}

void to_json(nlohmann::json& j, const BenchReport& report) {
  j = nlohmann::json{{"model_id", report.model_id},
                     {"host", report.host},
                     {"threads", report.threads},
                     {"batch", report.batch},
                     {"warmup_iters", report.warmup_iters},
                     {"measured_iters", report.measured_iters},
                     {"fps", report.fps},
                     {"p50_ms", report.p50_ms},
                     {"p95_ms", report.p95_ms},
                     {"p99_ms", report.p99_ms},
                     {"model_size_bytes", report.model_size_bytes}};
}

std::string bench_csv_header() {
  return "model_id,host,threads,batch,warmup_iters,measured_iters,fps,p50_ms,p95_ms,p99_ms,"
         "model_size_bytes";
}

std::string bench_csv_row(const BenchReport& r) {
  std::ostringstream os;
  os << '"' << r.model_id << "\",\"" << r.host << "\"," << r.threads << ',' << r.batch << ','
     << r.warmup_iters << ',' << r.measured_iters << ',' << r.fps << ',' << r.p50_ms << ','
     << r.p95_ms << ',' << r.p99_ms << ',' << r.model_size_bytes;
  return os.str();
}

namespace {

std::string host_descriptor() {
  std::string cpu = "unknown-cpu";
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    const auto pos = line.find("model name");
    if (pos != std::string::npos) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        cpu = line.substr(colon + 2);
      }
      break;
    }
  }
  return cpu + " (" + std::to_string(std::thread::hardware_concurrency()) + " hw threads)";
}

double nearest_rank(const std::vector<double>& sorted, double percentile) {
  const std::size_t n = sorted.size();
  const std::size_t rank =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(percentile / 100.0 * n)));
  return sorted[std::min(rank, n) - 1];
}

}  // namespace

BenchReport bench_fps(const Model<float>& model, const BenchOptions& options) {
  if (!model.defined()) raise(ErrorKind::InvalidConfig, "bench needs a model");
  if (options.measured_iters < 10) raise(ErrorKind::InvalidParameter, "measured_iters must be >= 10");
  if (options.batch < 1 || options.warmup_iters < 0 || options.threads < 1) {
    raise(ErrorKind::InvalidParameter, "invalid bench options");
  }
  const ClockFn clock = options.clock ? options.clock : steady_clock_fn();
  const ModelConfig& cfg = model.config();

  Rng rng(options.input_seed);
  Tensor<float> input =
      Tensor<float>::uniform({options.batch, 3, cfg.input_h, cfg.input_w}, 0.0, 1.0, rng);

  NoGradGuard no_grad;
  auto run_worker = [&](std::vector<double>& latencies) {
    for (int i = 0; i < options.warmup_iters; ++i) model.forward(input);
    latencies.reserve(static_cast<std::size_t>(options.measured_iters));
    for (int i = 0; i < options.measured_iters; ++i) {
      const double t0 = clock();
      model.forward(input);
      const double t1 = clock();
      latencies.push_back(t1 - t0);
    }
  };

  std::vector<double> latencies;
  double elapsed = 0;
  if (options.threads == 1) {
    run_worker(latencies);
    for (double v : latencies) elapsed += v;
  } else {
    std::vector<std::vector<double>> per_worker(static_cast<std::size_t>(options.threads));
    std::vector<std::thread> workers;
    workers.reserve(per_worker.size());
    for (auto& lat : per_worker) workers.emplace_back(run_worker, std::ref(lat));
    for (auto& w : workers) w.join();
    for (auto& lat : per_worker) {
      double worker_elapsed = 0;
      for (double v : lat) worker_elapsed += v;
      elapsed = std::max(elapsed, worker_elapsed);
      latencies.insert(latencies.end(), lat.begin(), lat.end());
    }
  }

  std::sort(latencies.begin(), latencies.end());
  const std::int64_t frames =
      static_cast<std::int64_t>(options.measured_iters) * options.batch * options.threads;

  BenchReport report;
  report.model_id = to_string(cfg.kind);
  report.host = host_descriptor();
  report.threads = options.threads;
  report.batch = options.batch;
  report.warmup_iters = options.warmup_iters;
  report.measured_iters = options.measured_iters;
  report.fps = static_cast<double>(frames) / elapsed;
  report.p50_ms = nearest_rank(latencies, 50) * 1000.0;
  report.p95_ms = nearest_rank(latencies, 95) * 1000.0;
  report.p99_ms = nearest_rank(latencies, 99) * 1000.0;
  report.model_size_bytes = model_size_bytes(model);
  return report;
}

SizeReport size_report(const std::string& checkpoint_path) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  SizeReport report;
  report.param_count = loaded.model.param_count();
  report.payload_bytes = report.param_count * 4;
  std::ifstream in(checkpoint_path, std::ios::binary | std::ios::ate);
  report.total_file_bytes = static_cast<std::int64_t>(in.tellg());
  return report;
}

}  // namespace mvkd
