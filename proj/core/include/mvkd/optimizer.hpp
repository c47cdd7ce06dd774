#pragma once

#include <cstdint>
#include <vector>

#include "mvkd/params.hpp"

namespace mvkd {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay:
//   theta <- theta - lr*wd*theta - lr * m_hat / (sqrt(v_hat) + eps)
// Parameters whose gradient buffer is empty are skipped for that step.
template <typename T>
class AdamW {
 public:
  AdamW(ParamStore<T>& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {
    slots_.resize(params.entries().size());
  }

  void step();
  void zero_grad() { params_->zero_grad(); }
  std::int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  ParamStore<T>* params_;
  AdamWConfig cfg_;
  std::vector<Slot> slots_;
  std::int64_t t_ = 0;
};

}  // namespace mvkd
