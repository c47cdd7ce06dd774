#include "mvkd/optimizer.hpp"

#include <cmath>

namespace mvkd {

template <typename T>
void AdamW<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto& entries = params_->entries();
  for (std::size_t pi = 0; pi < entries.size(); ++pi) {
    const Tensor<T>& handle = entries[pi].second;
    auto* node = handle.node();
    if (node->grad.empty()) continue;
    auto& slot = slots_[pi];
    if (slot.m.empty()) {
      slot.m.assign(node->data.size(), T(0));
      slot.v.assign(node->data.size(), T(0));
    }
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T lr = static_cast<T>(cfg_.lr);
    const T wd = static_cast<T>(cfg_.weight_decay);
    const T eps = static_cast<T>(cfg_.eps);
    const T inv_bc1 = static_cast<T>(1.0 / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    for (std::size_t i = 0; i < node->data.size(); ++i) {
      const T g = node->grad[i];
      slot.m[i] = b1 * slot.m[i] + (T(1) - b1) * g;
      slot.v[i] = b2 * slot.v[i] + (T(1) - b2) * g * g;
      const T m_hat = slot.m[i] * inv_bc1;
      const T v_hat = slot.v[i] * inv_bc2;
      node->data[i] -= lr * wd * node->data[i] + lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace mvkd
