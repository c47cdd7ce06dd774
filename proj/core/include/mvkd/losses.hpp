#pragma once

#include <vector>

#include "mvkd/ops.hpp"

namespace mvkd {

// Mean over the batch of -log softmax(logits)[label], via fused log-softmax.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

// Mean over rows of sum_c p_t * ln(p_t / p_s). Rows must already be
// probability distributions (sum 1 within 1e-5). The gradient flows to the
// student side only; the teacher argument is treated as a constant.
template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& p_teacher, const Tensor<T>& p_student);

// Soft-target distillation objective:
//   L = (1 - alpha) * CE(labels, student at T=1)
//       + alpha * T^2 * KL(softmax(teacher/T) || softmax(student/T))
// with the teacher logits detached from the gradient graph.
template <typename T>
Tensor<T> kd_total_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits,
                        const std::vector<int>& labels, double temperature, double alpha);

}  // namespace mvkd
