#include "mmgl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "mmgl/errors.hpp"
#include "mmgl/random.hpp"

namespace mmgl {

void SyntheticSpec::validate() const {
  if (num_patients == 0) throw ParameterError("synthetic: num_patients must be >= 1");
  if (modality_dims.empty()) throw ParameterError("synthetic: at least one modality is required");
  for (std::size_t d : modality_dims)
    if (d == 0) throw ParameterError("synthetic: modality dims must be >= 1");
  if (num_classes < 2) throw ParameterError("synthetic: num_classes must be >= 2");
  if (!(separation >= 0.0)) throw ParameterError("synthetic: separation must be >= 0");
  if (!(noise >= 0.0)) throw ParameterError("synthetic: noise must be >= 0");
  if (redundant && modality_dims.size() < 2) {
    throw ParameterError("synthetic: the redundant flag needs two modalities");
  }
}

namespace {

std::vector<double> unit_direction(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

MultiModalDataset synthetic_generate(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_patients;
  const std::size_t M = spec.modality_dims.size();
  const std::size_t C = spec.num_classes;
  Rng rng(spec.seed);

  MultiModalDataset ds;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % C);
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "P%05zu", i);
    ds.patient_ids.emplace_back(buf);
  }
  for (std::size_t c = 0; c < C; ++c) ds.class_names.push_back("class" + std::to_string(c));

  // centroids[m][c]
  std::vector<std::vector<std::vector<double>>> centroids(M);
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t d = spec.modality_dims[m];
    centroids[m].assign(C, std::vector<double>(d, 0.0));
    for (std::size_t c = 0; c < C; ++c) {
      if (spec.complementary && c % M != m) continue;
      auto dir = unit_direction(d, rng);
      for (std::size_t k = 0; k < d; ++k) centroids[m][c][k] = spec.separation * dir[k];
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t d = spec.modality_dims[m];
    ModalityBlock block;
    block.name = "modality" + std::to_string(m);
    for (std::size_t k = 0; k < d; ++k) block.feature_names.push_back("m" + std::to_string(m) + "_f" + std::to_string(k));
    block.features = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(ds.labels[i]);
      for (std::size_t k = 0; k < d; ++k) {
        double signal = centroids[m][c][k];
        if (spec.redundant && m == 1) {
          signal = ds.modalities[0].features(i, k % spec.modality_dims[0]);
        }
        block.features(i, k) = signal + spec.noise * normal(rng);
      }
    }
    ds.modalities.push_back(std::move(block));
  }
  ds.validate();
  return ds;
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  using json = nlohmann::json;
  SyntheticSpec spec;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw ParseError("synthetic spec must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "num_patients") spec.num_patients = value.get<std::size_t>();
      else if (key == "modality_dims") spec.modality_dims = value.get<std::vector<std::size_t>>();
      else if (key == "num_classes") spec.num_classes = value.get<std::size_t>();
      else if (key == "separation") spec.separation = value.get<double>();
      else if (key == "noise") spec.noise = value.get<double>();
      else if (key == "complementary") spec.complementary = value.get<bool>();
      else if (key == "redundant") spec.redundant = value.get<bool>();
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else throw ParseError("synthetic spec: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synthetic spec '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_synthetic_spec(ss.str());
}

}  // namespace mmgl
