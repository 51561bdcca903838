#include "mmgl/graph_quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmgl/errors.hpp"

namespace mmgl {

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

GraphQualityReport incorrect_link_proportion(const Matrix& adjacency, std::span<const int> labels,
                                             std::string method, std::size_t buckets) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) {
    throw DimensionError("incorrect_link_proportion: adjacency must be square, got " +
                         adjacency.shape_string());
  }
  if (labels.size() != n) {
    throw DataError("incorrect_link_proportion: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(n) + " nodes");
  }
  if (buckets == 0) throw ParameterError("histogram needs at least one bucket");
  GraphQualityReport r;
  r.method = std::move(method);
  r.proportion.assign(n, std::numeric_limits<double>::quiet_NaN());
  r.isolated.assign(n, 0);
  r.histogram.assign(buckets, 0);
  std::vector<double> observed;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t edges = 0, wrong = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !(adjacency(i, j) > 0.0)) continue;
      ++edges;
      if (j > i) ++r.edge_count;
      if (labels[j] != labels[i]) ++wrong;
    }
    if (edges == 0) {
      r.isolated[i] = 1;
      ++r.isolated_count;
      continue;
    }
    const double p = static_cast<double>(wrong) / static_cast<double>(edges);
    r.proportion[i] = p;
    observed.push_back(p);
    sum += p;
    const auto b = std::min(buckets - 1, static_cast<std::size_t>(p * static_cast<double>(buckets)));
    ++r.histogram[b];
  }
  r.median = median(observed);
  r.mean = observed.empty() ? std::numeric_limits<double>::quiet_NaN()
                            : sum / static_cast<double>(observed.size());
  return r;
}

}  // namespace mmgl
