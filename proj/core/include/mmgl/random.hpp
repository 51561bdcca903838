#pragma once

#include <cstdint>
#include <random>

#include "mmgl/matrix.hpp"

namespace mmgl {

using Rng = std::mt19937_64;

/// Derives an independent child seed (splitmix64 of master ^ stream).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Entries uniform in [-limit, limit].
Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng);

/// Uniform with fan-in scaling: limit = sqrt(3 / rows), which keeps unit
/// variance for a row-vector times this matrix.
Matrix fan_in_uniform(std::size_t rows, std::size_t cols, Rng& rng);

/// Glorot/Xavier uniform: limit = sqrt(6 / (rows + cols)).
Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace mmgl
