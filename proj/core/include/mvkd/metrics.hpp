#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mvkd {

// Rows are true classes, columns predicted.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;  // C*C row-major
  std::vector<std::string> class_names;

  std::int64_t& at(int true_class, int predicted) {
    return counts[static_cast<std::size_t>(true_class) * num_classes + predicted];
  }
  std::int64_t at(int true_class, int predicted) const {
    return counts[static_cast<std::size_t>(true_class) * num_classes + predicted];
  }
  std::int64_t total() const;
  std::string to_csv() const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels,
                                 const std::vector<int>& predicted_labels, int num_classes,
                                 std::vector<std::string> class_names = {});

struct MetricsReport {
  double accuracy = 0;
  std::vector<double> precision, recall, f1;  // per class
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  std::int64_t sample_count = 0;
};

// accuracy = trace/total; per-class P = c_ii/col_i, R = c_ii/row_i,
// F1 = 2PR/(P+R); macro = unweighted class mean; zero denominators yield 0.
MetricsReport metrics(const ConfusionMatrix& cm);

void to_json(nlohmann::json& j, const MetricsReport& report);

}  // namespace mvkd
