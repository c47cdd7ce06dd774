#include "mvkd/losses.hpp"

#include <cmath>

namespace mvkd {

namespace {

using i64 = std::int64_t;

template <typename T>
void check_distribution_rows(const Tensor<T>& p, const char* which) {
  const i64 c = p.dim(p.ndim() - 1);
  const i64 rows = p.size() / c;
  const auto& v = p.data();
  for (i64 r = 0; r < rows; ++r) {
    double sum = 0;
    for (i64 i = 0; i < c; ++i) {
      const double x = v[r * c + i];
      if (x < 0) raise(ErrorKind::InvalidDistribution, std::string(which) + " has a negative entry");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-5) {
      raise(ErrorKind::InvalidDistribution,
            std::string(which) + " row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) raise(ErrorKind::ShapeMismatch, "cross_entropy expects [B,C] logits");
  const i64 b = logits.dim(0);
  const i64 c = logits.dim(1);
  if (static_cast<i64>(labels.size()) != b) {
    raise(ErrorKind::ShapeMismatch, "label count does not match batch size");
  }
  std::vector<T> onehot(static_cast<std::size_t>(b * c), T(0));
  for (i64 i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) {
      raise(ErrorKind::InvalidLabel, "label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
    onehot[i * c + y] = T(1);
  }
  Tensor<T> picked = mul(log_softmax(logits), Tensor<T>::from_data({b, c}, std::move(onehot)));
  return mul_scalar(reduce_all(picked, Reduce::Sum), -1.0 / static_cast<double>(b));
}

template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& p_teacher, const Tensor<T>& p_student) {
  if (p_teacher.shape() != p_student.shape() || p_teacher.ndim() != 2) {
    raise(ErrorKind::ShapeMismatch, "kl_divergence expects matching [B,C] distributions");
  }
  check_distribution_rows(p_teacher, "teacher distribution");
  check_distribution_rows(p_student, "student distribution");

  const i64 b = p_teacher.dim(0);
  const i64 c = p_teacher.dim(1);
  const auto& pt = p_teacher.data();
  const auto& ps = p_student.data();
  double total = 0;
  for (i64 i = 0; i < b * c; ++i) {
    const double t = pt[i];
    if (t > 0) total += t * std::log(t / static_cast<double>(ps[i]));
  }
  std::vector<T> value{static_cast<T>(total / static_cast<double>(b))};

  // Teacher side is detached by construction: gradient only reaches p_student.
  auto backward = [b, c](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& teacher = self.parents[0];
    auto& student = self.parents[1];
    if (!student->requires_grad) return;
    auto& g = sink.get(student.get());
    const T scale = og[0] / static_cast<T>(b);
    for (i64 i = 0; i < b * c; ++i) {
      const T t = teacher->data[i];
      if (t > 0) g[i] -= scale * t / student->data[i];
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(
      Shape{}, std::move(value), {p_teacher.node_ptr(), p_student.node_ptr()}, std::move(backward)));
}

template <typename T>
Tensor<T> kd_total_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits,
                        const std::vector<int>& labels, double temperature, double alpha) {
  if (!(temperature > 0)) raise(ErrorKind::InvalidParameter, "temperature must be > 0");
  if (alpha < 0 || alpha > 1) raise(ErrorKind::InvalidParameter, "alpha must lie in [0,1]");
  if (student_logits.shape() != teacher_logits.shape()) {
    raise(ErrorKind::ShapeMismatch, "student and teacher logits differ in shape");
  }

  Tensor<T> ce = cross_entropy(student_logits, labels);

  const i64 b = student_logits.dim(0);
  Tensor<T> teacher_const = teacher_logits.detach();
  Tensor<T> teacher_log_probs = log_softmax(mul_scalar(teacher_const, 1.0 / temperature));
  Tensor<T> teacher_probs = softmax(teacher_const, temperature);
  Tensor<T> student_log_probs = log_softmax(mul_scalar(student_logits, 1.0 / temperature));

  Tensor<T> per_entry = mul(teacher_probs, sub(teacher_log_probs, student_log_probs));
  Tensor<T> kld = mul_scalar(reduce_all(per_entry, Reduce::Sum), 1.0 / static_cast<double>(b));

  return add(mul_scalar(ce, 1.0 - alpha), mul_scalar(kld, alpha * temperature * temperature));
}

template Tensor<float> cross_entropy(const Tensor<float>&, const std::vector<int>&);
template Tensor<double> cross_entropy(const Tensor<double>&, const std::vector<int>&);
template Tensor<float> kl_divergence(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> kl_divergence(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> kd_total_loss(const Tensor<float>&, const Tensor<float>&,
                                     const std::vector<int>&, double, double);
template Tensor<double> kd_total_loss(const Tensor<double>&, const Tensor<double>&,
                                      const std::vector<int>&, double, double);

}  // namespace mvkd
