#pragma once

// Classification metrics. Predictions are argmax of the logits with ties going
// to the lowest class index. Scores for AUC are softmax probabilities. Binary
// tasks treat class 1 as positive; multi-class AUC is the macro average of the
// one-vs-rest AUCs. SEN and SPE are reported for binary tasks only (NaN
// otherwise).

#include <cstddef>
#include <span>
#include <vector>

#include "mmgl/matrix.hpp"

namespace mmgl {

struct Metrics {
  std::size_t num_classes = 0;
  double acc = 0.0;
  double auc = 0.0;
  double sen = 0.0;
  double spe = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

  bool binary() const { return num_classes == 2; }
};

/// Index of the largest entry of each row; ties pick the lowest index.
std::vector<int> argmax_rows(const Matrix& logits);

/// Mann-Whitney AUC of `scores` for the `positive` flags, ties counted half.
/// Throws DataError when either class is empty.
double binary_auc(std::span<const double> scores, std::span<const char> positive);

/// Throws DataError on shape mismatch, out-of-range labels, or when a class
/// needed for AUC has no members.
Metrics compute_metrics(const Matrix& logits, std::span<const int> labels,
                        std::size_t num_classes = 0);

/// Accuracy read off a confusion matrix.
double confusion_accuracy(const std::vector<std::vector<std::size_t>>& confusion);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 for one value
};
Summary summarize(std::span<const double> values);

struct MetricsReport {
  std::vector<Metrics> folds;
  Summary acc, auc, sen, spe;
  bool binary = false;
};
MetricsReport aggregate(std::vector<Metrics> folds);

}  // namespace mmgl
