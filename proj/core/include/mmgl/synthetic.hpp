#pragma once

// Class-conditional Gaussian multi-modal data for tests and experiments.
//
// Every modality draws x = centroid(class) + noise * N(0, I). Class centroids
// are placed `separation` away from the origin along random unit directions.
// With `complementary`, modality m only tells apart the classes c with
// c mod M == m; all other classes share the origin in that modality, so no
// single modality identifies every class. With `redundant`, modality 1 is a
// noisy copy of modality 0: feature k is feature k mod d_0 of modality 0 plus
// fresh noise.

#include <cstdint>
#include <string>
#include <vector>

#include "mmgl/data.hpp"

namespace mmgl {

struct SyntheticSpec {
  std::size_t num_patients = 600;
  std::vector<std::size_t> modality_dims{8, 8, 8};
  std::size_t num_classes = 3;
  double separation = 3.0;
  double noise = 1.0;
  bool complementary = true;
  bool redundant = false;
  std::uint64_t seed = 7;

  void validate() const;
};

MultiModalDataset synthetic_generate(const SyntheticSpec& spec);

/// Reads a spec from JSON; absent keys keep their defaults. Keys:
/// num_patients, modality_dims, num_classes, separation, noise,
/// complementary, redundant, seed.
SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const std::string& path);

}  // namespace mmgl
