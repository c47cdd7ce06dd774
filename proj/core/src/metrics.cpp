#include "mvkd/metrics.hpp"

#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mvkd/error.hpp"

namespace mvkd {

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t(0));
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "true\\predicted";
  for (int p = 0; p < num_classes; ++p) {
    os << ',' << (p < static_cast<int>(class_names.size()) ? class_names[p] : std::to_string(p));
  }
  os << '\n';
  for (int t = 0; t < num_classes; ++t) {
    os << (t < static_cast<int>(class_names.size()) ? class_names[t] : std::to_string(t));
    for (int p = 0; p < num_classes; ++p) os << ',' << at(t, p);
    os << '\n';
  }
  return os.str();
}

ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels,
                                 const std::vector<int>& predicted_labels, int num_classes,
                                 std::vector<std::string> class_names) {
  if (num_classes < 1) raise(ErrorKind::InvalidParameter, "num_classes must be >= 1");
  if (true_labels.size() != predicted_labels.size()) {
    raise(ErrorKind::ShapeMismatch, "label vectors differ in length");
  }
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
  cm.class_names = std::move(class_names);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int t = true_labels[i];
    const int p = predicted_labels[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      raise(ErrorKind::InvalidLabel, "label outside [0, " + std::to_string(num_classes) + ") at index " +
                                         std::to_string(i));
    }
    ++cm.at(t, p);
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  MetricsReport report;
  const int c = cm.num_classes;
  report.sample_count = cm.total();
  report.precision.assign(static_cast<std::size_t>(c), 0.0);
  report.recall.assign(static_cast<std::size_t>(c), 0.0);
  report.f1.assign(static_cast<std::size_t>(c), 0.0);
  if (report.sample_count == 0) return report;

  std::int64_t trace = 0;
  for (int i = 0; i < c; ++i) {
    trace += cm.at(i, i);
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += cm.at(i, j);
      col += cm.at(j, i);
    }
    const double tp = static_cast<double>(cm.at(i, i));
    const double p = col > 0 ? tp / static_cast<double>(col) : 0.0;
    const double r = row > 0 ? tp / static_cast<double>(row) : 0.0;
    report.precision[static_cast<std::size_t>(i)] = p;
    report.recall[static_cast<std::size_t>(i)] = r;
    report.f1[static_cast<std::size_t>(i)] = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  report.accuracy = static_cast<double>(trace) / static_cast<double>(report.sample_count);
  for (int i = 0; i < c; ++i) {
    report.macro_precision += report.precision[static_cast<std::size_t>(i)];
    report.macro_recall += report.recall[static_cast<std::size_t>(i)];
    report.macro_f1 += report.f1[static_cast<std::size_t>(i)];
  }
  report.macro_precision /= c;
  report.macro_recall /= c;
  report.macro_f1 /= c;
  return report;
}

void to_json(nlohmann::json& j, const MetricsReport& report) {
  j = nlohmann::json{{"accuracy", report.accuracy},
                     {"precision", report.precision},
                     {"recall", report.recall},
                     {"f1", report.f1},
                     {"macro_precision", report.macro_precision},
                     {"macro_recall", report.macro_recall},
                     {"macro_f1", report.macro_f1},
                     {"sample_count", report.sample_count}};
}

}  // namespace mvkd
