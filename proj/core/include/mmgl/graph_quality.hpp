#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmgl/matrix.hpp"

namespace mmgl {

/// Per-node share of incident edges (nonzero weight, self excluded) whose
/// other endpoint carries a different label. Nodes without edges are flagged
/// as isolated; their proportion is NaN and they stay out of the histogram
/// and the summary statistics.
struct GraphQualityReport {
  std::string method;
  std::vector<double> proportion;
  std::vector<char> isolated;
  std::vector<std::size_t> histogram;  // equal-width buckets over [0, 1]
  std::size_t isolated_count = 0;
  double median = 0.0;  // NaN when every node is isolated
  double mean = 0.0;
  std::size_t edge_count = 0;  // undirected edges
};

GraphQualityReport incorrect_link_proportion(const Matrix& adjacency, std::span<const int> labels,
                                             std::string method = "", std::size_t buckets = 10);

double median(std::vector<double> values);

}  // namespace mmgl
