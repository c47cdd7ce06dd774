#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvkd/tensor.hpp"

namespace mvkd {

// Named registry of trainable tensors. Registration order is the canonical
// order for optimizer updates and checkpoint payloads, so it must be
// deterministic for a given model config.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> tensor) {
    if (index_.count(name)) {
      raise(ErrorKind::InvalidConfig, "parameter registered twice: " + name);
    }
    tensor.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(tensor));
    return entries_.back().second;
  }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::size_t tensor_count() const { return entries_.size(); }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mvkd
