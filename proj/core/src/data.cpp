#include "mmgl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "mmgl/config.hpp"
#include "mmgl/errors.hpp"
#include "mmgl/random.hpp"

namespace mmgl {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- Dataset ----

std::size_t MultiModalDataset::num_classes() const {
  if (!class_names.empty()) return class_names.size();
  int top = -1;
  for (int y : labels) top = std::max(top, y);
  return static_cast<std::size_t>(top + 1);
}

std::vector<std::size_t> MultiModalDataset::modality_dims() const {
  std::vector<std::size_t> dims;
  for (const auto& m : modalities) dims.push_back(m.dim());
  return dims;
}

bool MultiModalDataset::has_missing() const {
  for (const auto& m : modalities)
    if (std::any_of(m.missing.begin(), m.missing.end(), [](std::uint8_t v) { return v != 0; }))
      return true;
  return false;
}

std::vector<Matrix> MultiModalDataset::features(std::span<const std::size_t> rows) const {
  std::vector<Matrix> out;
  out.reserve(modalities.size());
  for (const auto& m : modalities) {
    Matrix block(rows.size(), m.dim());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= size()) throw DataError("row " + std::to_string(rows[r]) + " out of range");
      auto src = m.features.row(rows[r]);
      std::copy(src.begin(), src.end(), block.row(r).begin());
    }
    out.push_back(std::move(block));
  }
  return out;
}

std::vector<int> MultiModalDataset::labels_of(std::span<const std::size_t> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels.at(r));
  return out;
}

MultiModalDataset MultiModalDataset::subset(std::span<const std::size_t> rows) const {
  MultiModalDataset out;
  out.class_names = class_names;
  std::vector<Matrix> blocks = features(rows);
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    ModalityBlock b;
    b.name = modalities[m].name;
    b.feature_names = modalities[m].feature_names;
    b.features = std::move(blocks[m]);
    if (!modalities[m].missing.empty()) {
      const std::size_t d = modalities[m].dim();
      b.missing.resize(rows.size() * d);
      for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(modalities[m].missing.begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d,
                    b.missing.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    out.modalities.push_back(std::move(b));
  }
  for (std::size_t r : rows) {
    out.labels.push_back(labels.at(r));
    out.patient_ids.push_back(patient_ids.at(r));
  }
  return out;
}

void MultiModalDataset::validate() const {
  if (modalities.empty()) throw DataError("dataset has no modalities");
  const std::size_t n = labels.size();
  if (patient_ids.size() != n) throw DataError("patient id count differs from label count");
  for (const auto& m : modalities) {
    if (m.features.rows() != n) {
      throw DataError("modality '" + m.name + "' has " + std::to_string(m.features.rows()) +
                      " rows, expected " + std::to_string(n));
    }
    if (m.dim() == 0) throw DataError("modality '" + m.name + "' has no features");
    if (!m.missing.empty() && m.missing.size() != m.features.size()) {
      throw DataError("modality '" + m.name + "' has a malformed missing mask");
    }
    if (m.feature_names.size() != m.dim()) {
      throw DataError("modality '" + m.name + "' feature names do not match its width");
    }
  }
  const std::size_t c = num_classes();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DataError("patient '" + patient_ids[i] + "' has label " + std::to_string(labels[i]) +
                      " outside [0, " + std::to_string(c) + ")");
    }
  }
}

DatasetShape shape_of(const MultiModalDataset& ds) {
  return DatasetShape{ds.modality_dims(), ds.num_classes()};
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

// ---- CSV ----

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no,
                                        const std::string& path) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  if (quoted) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": unterminated quoted field");
  }
  cells.push_back(std::move(cell));
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line, line_no, path);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(t.header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw ParseError(path + ": missing header row");
  if (t.header.front() != "patient_id") {
    throw ParseError(path + ": first column must be 'patient_id', found '" + t.header.front() + "'");
  }
  return t;
}

std::string trimmed(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

MultiModalDataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest '" + manifest_path + "'");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("manifest '" + manifest_path + "': " + e.what());
  }
  if (!manifest.contains("modalities") || !manifest["modalities"].is_array() ||
      manifest["modalities"].empty()) {
    throw DataError("manifest '" + manifest_path + "' lists no modalities");
  }
  if (!manifest.contains("labels") || !manifest["labels"].is_string()) {
    throw DataError("manifest '" + manifest_path + "' has no labels path");
  }
  const fs::path base = fs::path(manifest_path).parent_path();

  MultiModalDataset ds;
  if (manifest.contains("class_names")) {
    for (const auto& c : manifest["class_names"]) {
      if (!c.is_string()) throw ParseError("manifest '" + manifest_path + "': class_names must be strings");
      ds.class_names.push_back(c.get<std::string>());
    }
  }

  const std::string labels_path = resolve(base, manifest["labels"].get<std::string>()).string();
  CsvTable labels = read_csv(labels_path);
  const auto label_col = std::find(labels.header.begin(), labels.header.end(), "label");
  if (label_col == labels.header.end()) {
    throw DataError(labels_path + ": no 'label' column");
  }
  const auto lc = static_cast<std::size_t>(label_col - labels.header.begin());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < labels.rows.size(); ++r) {
    const std::string id = trimmed(labels.rows[r][0]);
    if (!index.emplace(id, r).second) {
      throw DataError(labels_path + ": duplicate patient id '" + id + "'");
    }
    ds.patient_ids.push_back(id);
    const std::string text = trimmed(labels.rows[r][lc]);
    int y = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), y);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      const auto named = std::find(ds.class_names.begin(), ds.class_names.end(), text);
      if (named == ds.class_names.end()) {
        throw ParseError(labels_path + ":" + std::to_string(labels.line_numbers[r]) +
                         ": unknown label '" + text + "'");
      }
      y = static_cast<int>(named - ds.class_names.begin());
    }
    ds.labels.push_back(y);
  }
  const std::size_t n = ds.labels.size();

  for (const auto& entry : manifest["modalities"]) {
    ModalityBlock block;
    std::string rel;
    try {
      block.name = entry.at("name").get<std::string>();
      rel = entry.at("path").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError("manifest '" + manifest_path + "': malformed modality entry: " + e.what());
    }
    const std::string path = resolve(base, rel).string();
    CsvTable t = read_csv(path);
    block.feature_names.assign(t.header.begin() + 1, t.header.end());
    const std::size_t d = block.feature_names.size();
    block.features = Matrix(n, d);
    block.missing.assign(n * d, 1);
    std::vector<char> seen(n, 0);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string id = trimmed(t.rows[r][0]);
      const auto it = index.find(id);
      if (it == index.end()) continue;  // patient without a label
      const std::size_t row = it->second;
      if (seen[row]) throw DataError(path + ": duplicate patient id '" + id + "'");
      seen[row] = 1;
      for (std::size_t c = 0; c < d; ++c) {
        const std::string cell = trimmed(t.rows[r][c + 1]);
        if (cell.empty()) continue;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
          throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": column '" +
                           block.feature_names[c] + "': non-numeric value '" + cell + "'");
        }
        block.features(row, c) = v;
        block.missing[row * d + c] = 0;
      }
    }
    ds.modalities.push_back(std::move(block));
  }
  ds.validate();
  return ds;
}

std::string save_dataset(const MultiModalDataset& ds, const std::string& dir) {
  ds.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["modalities"] = json::array();
  for (std::size_t m = 0; m < ds.num_modalities(); ++m) {
    const auto& block = ds.modalities[m];
    const std::string file = "modality_" + std::to_string(m) + ".csv";
    std::ofstream out(fs::path(dir) / file);
    out << "patient_id";
    for (const auto& f : block.feature_names) out << ',' << csv_escape(f);
    out << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
      out << csv_escape(ds.patient_ids[r]);
      for (std::size_t c = 0; c < block.dim(); ++c) {
        out << ',';
        if (!block.is_missing(r, c)) out << format_double(block.features(r, c));
      }
      out << '\n';
    }
    if (!out) throw DataError("failed writing '" + file + "' in '" + dir + "'");
    manifest["modalities"].push_back({{"name", block.name}, {"path", file}});
  }
  {
    std::ofstream out(fs::path(dir) / "labels.csv");
    out << "patient_id,label\n";
    for (std::size_t r = 0; r < ds.size(); ++r)
      out << csv_escape(ds.patient_ids[r]) << ',' << ds.labels[r] << '\n';
    if (!out) throw DataError("failed writing labels.csv in '" + dir + "'");
  }
  manifest["labels"] = "labels.csv";
  if (!ds.class_names.empty()) manifest["class_names"] = ds.class_names;
  const std::string path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(path);
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
  return path;
}

// ---- Cleaning ----

MultiModalDataset drop_high_missing(const MultiModalDataset& ds, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ParameterError("missing-rate threshold must lie in [0, 1]");
  }
  std::size_t total = 0;
  for (const auto& m : ds.modalities) total += m.dim();
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    std::size_t missing = 0;
    for (const auto& m : ds.modalities)
      for (std::size_t c = 0; c < m.dim(); ++c) missing += m.is_missing(r, c) ? 1 : 0;
    if (static_cast<double>(missing) / static_cast<double>(total) <= threshold) keep.push_back(r);
  }
  if (keep.empty()) {
    throw DataError("every patient exceeds the missing-rate threshold " + format_double(threshold));
  }
  if (keep.size() == ds.size()) return ds;
  return ds.subset(keep);
}

MultiModalDataset mean_impute(const MultiModalDataset& ds, std::span<const std::size_t> train_rows) {
  MultiModalDataset out = ds;
  for (auto& block : out.modalities) {
    if (block.missing.empty()) continue;
    const std::size_t d = block.dim();
    for (std::size_t c = 0; c < d; ++c) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t r : train_rows) {
        if (!block.is_missing(r, c)) {
          sum += block.features(r, c);
          ++count;
        }
      }
      bool any_missing = false;
      for (std::size_t r = 0; r < out.size() && !any_missing; ++r) any_missing = block.is_missing(r, c);
      if (!any_missing) continue;
      if (count == 0) {
        throw DataError("modality '" + block.name + "' column '" + block.feature_names[c] +
                        "' has no observed training values");
      }
      const double mean = sum / static_cast<double>(count);
      for (std::size_t r = 0; r < out.size(); ++r)
        if (block.is_missing(r, c)) block.features(r, c) = mean;
    }
    block.missing.clear();
  }
  return out;
}

MultiModalDataset standardize(const MultiModalDataset& ds, std::span<const std::size_t> train_rows,
                              StandardizationStats* stats) {
  if (train_rows.size() < 2) throw DataError("standardize needs at least two training rows");
  if (ds.has_missing()) throw DataError("standardize requires a dataset without missing values");
  MultiModalDataset out = ds;
  StandardizationStats s;
  for (auto& block : out.modalities) {
    const std::size_t d = block.dim();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t r : train_rows) mean[c] += block.features(r, c);
      mean[c] /= static_cast<double>(train_rows.size());
      for (std::size_t r : train_rows) {
        const double z = block.features(r, c) - mean[c];
        sd[c] += z * z;
      }
      sd[c] = std::sqrt(sd[c] / static_cast<double>(train_rows.size()));
      const double scale = sd[c] < 1e-12 ? 1.0 : 1.0 / sd[c];
      for (std::size_t r = 0; r < out.size(); ++r)
        block.features(r, c) = (block.features(r, c) - mean[c]) * scale;
    }
    s.mean.push_back(std::move(mean));
    s.stddev.push_back(std::move(sd));
  }
  if (stats != nullptr) *stats = std::move(s);
  return out;
}

MultiModalDataset preprocess(const MultiModalDataset& ds, std::span<const std::size_t> train_rows) {
  return standardize(mean_impute(ds, train_rows), train_rows);
}

// ---- Splits ----

std::vector<std::size_t> FoldSplit::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldSplit stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("stratified_kfold needs k >= 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [c, members] : by_class) {
    if (members.size() < k) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                      " members, fewer than k = " + std::to_string(k));
    }
  }
  Rng rng(seed);
  FoldSplit split;
  split.num_folds = k;
  split.fold_of.assign(labels.size(), 0);
  // Continue the round-robin across classes so fold sizes stay balanced too.
  std::size_t next = 0;
  for (auto& [c, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) {
      split.fold_of[i] = next;
      next = (next + 1) % k;
    }
  }
  return split;
}

RowPartition stratified_partition(std::span<const int> labels, std::span<const std::size_t> rows,
                                  double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ParameterError("partition fraction must lie in [0, 1]");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t r : rows) by_class[labels[r]].push_back(r);
  Rng rng(seed);
  RowPartition out;
  for (auto& [c, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    if (fraction > 0.0 && take == 0 && members.size() >= 2) take = 1;
    take = std::min(take, members.size());
    out.first.insert(out.first.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    out.second.insert(out.second.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

}  // namespace mmgl
