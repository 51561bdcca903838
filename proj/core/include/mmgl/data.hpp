#pragma once

// Multi-modal tabular datasets: ingestion, cleaning and splitting.
//
// On-disk layout: a JSON manifest
//
//   {"modalities": [{"name": "mri", "path": "mri.csv"}, ...],
//    "labels": "labels.csv",
//    "class_names": ["CN", "MCI", "AD"]}        (optional)
//
// Feature CSVs have a header row whose first column is `patient_id`; an empty
// cell is a missing value. The labels CSV is `patient_id,label` where label is
// an integer class index or one of class_names. Relative paths resolve against
// the manifest's directory. Patient order follows the labels file.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmgl/matrix.hpp"

namespace mmgl {

struct ModalityBlock {
  std::string name;
  std::vector<std::string> feature_names;
  Matrix features;                   // N x d_m; missing cells hold 0
  std::vector<std::uint8_t> missing;  // N x d_m row-major, 1 = missing

  std::size_t dim() const { return features.cols(); }
  bool is_missing(std::size_t row, std::size_t col) const {
    return !missing.empty() && missing[row * features.cols() + col] != 0;
  }
};

struct MultiModalDataset {
  std::vector<ModalityBlock> modalities;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> patient_ids;

  std::size_t size() const { return labels.size(); }
  std::size_t num_modalities() const { return modalities.size(); }
  std::size_t num_classes() const;
  std::vector<std::size_t> modality_dims() const;
  bool has_missing() const;

  /// Rows `rows` of every modality, in the given order.
  std::vector<Matrix> features(std::span<const std::size_t> rows) const;
  /// Labels of `rows`.
  std::vector<int> labels_of(std::span<const std::size_t> rows) const;
  MultiModalDataset subset(std::span<const std::size_t> rows) const;

  /// Throws DataError when the blocks, labels and ids disagree.
  void validate() const;
};

/// Shape identity used to match checkpoints to datasets.
struct DatasetShape {
  std::vector<std::size_t> modality_dims;
  std::size_t num_classes = 0;

  bool operator==(const DatasetShape&) const = default;
};
DatasetShape shape_of(const MultiModalDataset& ds);

MultiModalDataset load_dataset(const std::string& manifest_path);
/// Writes manifest.json, labels.csv and one CSV per modality into `dir`.
/// Returns the manifest path.
std::string save_dataset(const MultiModalDataset& ds, const std::string& dir);

/// Removes patients whose missing fraction over all features exceeds `threshold`.
MultiModalDataset drop_high_missing(const MultiModalDataset& ds, double threshold = 0.05);

/// Fills missing cells with the column mean over observed cells of `train_rows`.
MultiModalDataset mean_impute(const MultiModalDataset& ds, std::span<const std::size_t> train_rows);

struct StandardizationStats {
  std::vector<std::vector<double>> mean;    // per modality, per feature
  std::vector<std::vector<double>> stddev;  // population std; < 1e-12 means centered only
};

/// z-scores every feature with mean/std of `train_rows`.
MultiModalDataset standardize(const MultiModalDataset& ds, std::span<const std::size_t> train_rows,
                              StandardizationStats* stats = nullptr);

/// Imputation followed by standardization, both fitted on `train_rows`.
MultiModalDataset preprocess(const MultiModalDataset& ds, std::span<const std::size_t> train_rows);

struct FoldSplit {
  std::size_t num_folds = 0;
  std::vector<std::size_t> fold_of;  // one entry per sample

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Stratified K-fold assignment, deterministic per seed.
FoldSplit stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Two-way stratified split of `rows` (indices into `labels`). The first part
/// receives round(fraction * n_c) members of each class, at least one when the
/// class has two or more members. Both parts keep ascending index order.
struct RowPartition {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};
RowPartition stratified_partition(std::span<const int> labels, std::span<const std::size_t> rows,
                                  double fraction, std::uint64_t seed);

std::vector<std::size_t> all_rows(std::size_t n);

}  // namespace mmgl
