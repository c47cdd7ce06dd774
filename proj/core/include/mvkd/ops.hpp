#pragma once

#include <vector>

#include "mvkd/tensor.hpp"

namespace mvkd {

enum class Activation { Relu, Silu, Gelu };
enum class Reduce { Sum, Mean, Max };

// Elementwise arithmetic with numpy-style trailing-axis broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, double s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, double s);

// Batched matrix product. Leading (batch) dims must match exactly, or either
// operand may be rank-2 and is then shared across the other side's batch.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// x: [B,Cin,H,W], w: [Cout,Cin/groups,kh,kw], bias: [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride = 1, int padding = 0, int groups = 1);

// Temperature-scaled softmax over the last axis, max-subtracted.
template <typename T> Tensor<T> softmax(const Tensor<T>& z, double temperature = 1.0);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& z);

// Normalizes the last axis to zero mean / unit variance, then applies the
// affine pair. gamma/beta: [D].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);

template <typename T> Tensor<T> activation(const Tensor<T>& x, Activation kind);
template <typename T> Tensor<T> relu(const Tensor<T>& x) { return activation(x, Activation::Relu); }
template <typename T> Tensor<T> silu(const Tensor<T>& x) { return activation(x, Activation::Silu); }
template <typename T> Tensor<T> gelu(const Tensor<T>& x) { return activation(x, Activation::Gelu); }

// [B,C,H,W] -> [B, (H/p)*(W/p), p*p, C]; patches ordered row-major over the
// patch grid, pixels row-major within each patch. fold_patches is the exact
// inverse (bit-equal roundtrip).
template <typename T> Tensor<T> unfold_patches(const Tensor<T>& x, int p);
template <typename T> Tensor<T> fold_patches(const Tensor<T>& t, int p, std::int64_t h, std::int64_t w);

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, Reduce op, const std::vector<int>& axes, bool keepdims = false);
template <typename T> Tensor<T> reduce_all(const Tensor<T>& x, Reduce op);
// [B,C,H,W] -> [B,C]
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length);

}  // namespace mvkd
