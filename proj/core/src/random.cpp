#include "mmgl/random.hpp"

#include <cmath>

namespace mmgl {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master ^ (stream * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

Matrix fan_in_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  return uniform_matrix(rows, cols, std::sqrt(3.0 / static_cast<double>(rows)), rng);
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  return uniform_matrix(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

}  // namespace mmgl
