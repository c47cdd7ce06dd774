#pragma once

// Central finite-difference gradient oracle. Used by the unit tests and the
// acceptance suite; independent of the backward pass it checks: expected
// derivatives come from re-running forward at perturbed inputs only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mvkd/ops.hpp"

namespace mvkd::testing {

// Scalarizes a tensor with fixed random weights so every output element
// influences the loss. Weights are drawn once (on first use) and reused, so
// repeated loss evaluations see the same function.
template <typename T>
class Scalarizer {
 public:
  explicit Scalarizer(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> operator()(const Tensor<T>& t) {
    if (!weights_.defined()) weights_ = Tensor<T>::uniform(t.shape(), 0.25, 1.75, rng_);
    return reduce_all(mul(t, weights_), Reduce::Sum);
  }

 private:
  Rng rng_;
  Tensor<T> weights_;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst;  // leaf/coordinate of the worst deviation
};

// leaves: the tensors to differentiate with respect to (must have
// requires_grad set). make_loss: rebuilds the scalar loss from the current
// leaf data. Coordinates are subsampled per leaf when larger than
// max_coords.
inline GradCheckResult gradcheck(std::vector<Tensor<double>> leaves,
                                 const std::function<Tensor<double>()>& make_loss,
                                 Rng& pick_rng, int max_coords = 12, double h = 1e-3) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Tensor<double> loss = make_loss();
  loss.backward();

  GradCheckResult result;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    const std::int64_t n = leaf.size();
    std::vector<std::int64_t> coords;
    if (n <= max_coords) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (int i = 0; i < max_coords; ++i) {
        coords.push_back(static_cast<std::int64_t>(pick_rng.below(static_cast<std::uint64_t>(n))));
      }
    }
    const std::vector<double> analytic =
        leaf.has_grad() ? leaf.grad() : std::vector<double>(static_cast<std::size_t>(n), 0.0);

    for (const std::int64_t c : coords) {
      const double saved = leaf.data()[static_cast<std::size_t>(c)];
      double plus, minus;
      {
        NoGradGuard no_grad;
        leaf.mutable_data()[static_cast<std::size_t>(c)] = saved + h;
        plus = make_loss().item();
        leaf.mutable_data()[static_cast<std::size_t>(c)] = saved - h;
        minus = make_loss().item();
        leaf.mutable_data()[static_cast<std::size_t>(c)] = saved;
      }
      const double fd = (plus - minus) / (2.0 * h);
      const double a = analytic[static_cast<std::size_t>(c)];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = "leaf " + std::to_string(li) + " coord " + std::to_string(c) + " analytic " +
                       std::to_string(a) + " fd " + std::to_string(fd);
      }
    }
  }
  return result;
}

}  // namespace mvkd::testing
