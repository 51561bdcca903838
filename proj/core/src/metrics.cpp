#include "mmgl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmgl/errors.hpp"

namespace mmgl {

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows(), 0);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

double binary_auc(std::span<const double> scores, std::span<const char> positive) {
  if (scores.size() != positive.size()) throw DataError("binary_auc: score/label length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks (1-based) over tied groups.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[i]) {
      rank_sum += rank[i];
      ++n_pos;
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC is undefined when only one class is present");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double confusion_accuracy(const std::vector<std::vector<std::size_t>>& confusion) {
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    for (std::size_t j = 0; j < confusion[i].size(); ++j) {
      total += confusion[i][j];
      if (i == j) hit += confusion[i][j];
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

Metrics compute_metrics(const Matrix& logits, std::span<const int> labels, std::size_t num_classes) {
  if (logits.rows() != labels.size()) {
    throw DataError("compute_metrics: " + std::to_string(logits.rows()) + " logit rows for " +
                    std::to_string(labels.size()) + " labels");
  }
  if (num_classes == 0) num_classes = logits.cols();
  if (logits.cols() != num_classes) {
    throw DataError("compute_metrics: logits have " + std::to_string(logits.cols()) +
                    " columns for " + std::to_string(num_classes) + " classes");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DataError("compute_metrics: label " + std::to_string(y) + " out of range");
    }
  }
  Metrics m;
  m.num_classes = num_classes;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  const std::vector<int> pred = argmax_rows(logits);
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++m.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(pred[i])];
  m.acc = confusion_accuracy(m.confusion);

  const Matrix prob = softmax_rows(logits, 1.0);
  std::vector<double> scores(labels.size());
  std::vector<char> positive(labels.size());
  auto one_vs_rest = [&](std::size_t c) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = prob(i, c);
      positive[i] = static_cast<std::size_t>(labels[i]) == c ? 1 : 0;
    }
    return binary_auc(scores, positive);
  };
  if (num_classes == 2) {
    m.auc = one_vs_rest(1);
    const double tp = static_cast<double>(m.confusion[1][1]);
    const double fn = static_cast<double>(m.confusion[1][0]);
    const double tn = static_cast<double>(m.confusion[0][0]);
    const double fp = static_cast<double>(m.confusion[0][1]);
    m.sen = tp / (tp + fn);
    m.spe = tn / (tn + fp);
  } else {
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) sum += one_vs_rest(c);
    m.auc = sum / static_cast<double>(num_classes);
    m.sen = std::numeric_limits<double>::quiet_NaN();
    m.spe = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

MetricsReport aggregate(std::vector<Metrics> folds) {
  MetricsReport r;
  r.binary = !folds.empty() && folds.front().binary();
  std::vector<double> acc, auc, sen, spe;
  for (const auto& f : folds) {
    acc.push_back(f.acc);
    auc.push_back(f.auc);
    sen.push_back(f.sen);
    spe.push_back(f.spe);
  }
  r.acc = summarize(acc);
  r.auc = summarize(auc);
  if (r.binary) {
    r.sen = summarize(sen);
    r.spe = summarize(spe);
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.sen = r.spe = Summary{nan, nan};
  }
  r.folds = std::move(folds);
  return r;
}

}  // namespace mmgl
