#pragma once

// Tabular data model shared by every module: Dataset (X, Y, optional expert
// prediction, optional rich feedback), PredictionMatrix (finite class
// evaluated per row), Partition (cell assignment). Files are delimited text
// with a header row; floats round-trip exactly because writes use 17
// significant digits. Out-of-range values are errors, never clamps: a
// silently clamped outcome would corrupt every covariance downstream.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "indist/errors.hpp"
#include "indist/rng.hpp"

namespace indist {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), a(r * c, fill) {}

  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }
};

struct Dataset {
  Matrix features;  // n x d
  std::vector<double> outcome;
  std::optional<std::vector<double>> expert;
  std::optional<Matrix> feedback;
  std::vector<std::string> row_ids;
  std::vector<std::string> feature_names;
  std::vector<std::string> feedback_names;

  std::size_t n() const { return outcome.size(); }
  std::size_t d() const { return features.cols; }
};

struct PredictionMatrix {
  Matrix preds;  // n x m, entries in [0,1]
  std::vector<std::string> model_names;

  std::size_t n() const { return preds.rows; }
  std::size_t m() const { return preds.cols; }
};

enum class Provenance { cluster, net, boost, external };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::cluster: return "cluster";
    case Provenance::net: return "net";
    case Provenance::boost: return "boost";
    case Provenance::external: return "external";
  }
  return "external";
}

struct Partition {
  std::vector<int> assignment;  // per-row cell index in [0, K)
  int cell_count = 0;
  std::vector<std::size_t> cell_sizes;
  Provenance provenance = Provenance::external;

  std::size_t n() const { return assignment.size(); }

  // row indices per cell, in ascending row order
  std::vector<std::vector<std::size_t>> rows_by_cell() const {
    std::vector<std::vector<std::size_t>> out(cell_count);
    for (std::size_t i = 0; i < assignment.size(); ++i)
      out[assignment[i]].push_back(i);
    return out;
  }
};

inline Partition make_partition(std::vector<int> assignment, int cell_count,
                                Provenance provenance) {
  Partition p;
  p.assignment = std::move(assignment);
  p.cell_count = cell_count;
  p.provenance = provenance;
  p.cell_sizes.assign(cell_count, 0);
  for (int c : p.assignment) {
    if (c < 0 || c >= cell_count)
      fail(errc::unknown_cell, "assignment index " + std::to_string(c) +
                                   " outside [0," + std::to_string(cell_count) + ")");
    ++p.cell_sizes[c];
  }
  return p;
}

// ---------------------------------------------------------------------------
// number formatting / parsing

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline bool parse_double_strict(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* c = s.c_str();
  char* end = nullptr;
  out = std::strtod(c, &end);
  if (end != c + s.size()) return false;
  if (!std::isfinite(out)) return false;  // NaN/Inf never enter a Dataset
  return true;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::vector<std::string>> read_table(const std::string& path,
                                                        char delim) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    rows.push_back(split_line(line, delim));
  }
  if (rows.empty()) fail(errc::parse_error, path + " is empty (header row required)");
  return rows;
}

inline std::size_t column_index(const std::vector<std::string>& header,
                                const std::string& name, const std::string& path) {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return j;
  fail(errc::missing_column, "column '" + name + "' not found in " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ingestion

struct DatasetSchema {
  std::string outcome_col = "y";
  std::optional<std::string> expert_col;
  std::vector<std::string> feature_cols;   // empty: every unmapped column
  std::vector<std::string> feedback_cols;  // optional rich-feedback scores
  std::optional<std::string> id_col;
  char delimiter = ',';
};

inline Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  auto rows = detail::read_table(path, schema.delimiter);
  const auto& header = rows.front();

  std::size_t y_idx = detail::column_index(header, schema.outcome_col, path);
  std::optional<std::size_t> expert_idx;
  if (schema.expert_col)
    expert_idx = detail::column_index(header, *schema.expert_col, path);
  std::optional<std::size_t> id_idx;
  if (schema.id_col) id_idx = detail::column_index(header, *schema.id_col, path);
  std::vector<std::size_t> fb_idx;
  for (const auto& name : schema.feedback_cols)
    fb_idx.push_back(detail::column_index(header, name, path));

  std::vector<std::size_t> feat_idx;
  std::vector<std::string> feat_names;
  if (!schema.feature_cols.empty()) {
    for (const auto& name : schema.feature_cols) {
      feat_idx.push_back(detail::column_index(header, name, path));
      feat_names.push_back(name);
    }
  } else {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == y_idx) continue;
      if (expert_idx && j == *expert_idx) continue;
      if (id_idx && j == *id_idx) continue;
      if (std::find(fb_idx.begin(), fb_idx.end(), j) != fb_idx.end()) continue;
      feat_idx.push_back(j);
      feat_names.push_back(header[j]);
    }
  }

  std::size_t n = rows.size() - 1;
  Dataset ds;
  ds.feature_names = feat_names;
  ds.features = Matrix(n, feat_idx.size());
  ds.outcome.resize(n);
  if (expert_idx) ds.expert = std::vector<double>(n);
  if (!fb_idx.empty()) {
    ds.feedback = Matrix(n, fb_idx.size());
    ds.feedback_names = schema.feedback_cols;
  }
  ds.row_ids.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& cells = rows[i + 1];
    if (cells.size() != header.size())
      fail(errc::parse_error, path + " row " + std::to_string(i) + ": expected " +
                                  std::to_string(header.size()) + " cells, got " +
                                  std::to_string(cells.size()));
    auto cell_value = [&](std::size_t j) {
      double v;
      if (!detail::parse_double_strict(cells[j], v))
        fail(errc::parse_error, path + " row " + std::to_string(i) + " column '" +
                                    header[j] + "': cannot parse '" + cells[j] + "'");
      return v;
    };
    double y = cell_value(y_idx);
    if (y < 0.0 || y > 1.0)
      fail(errc::out_of_range,
           path + " row " + std::to_string(i) + ": outcome " + format_double(y) +
               " outside [0,1]");
    ds.outcome[i] = y;
    if (expert_idx) {
      double e = cell_value(*expert_idx);
      if (e < 0.0 || e > 1.0)
        fail(errc::out_of_range,
             path + " row " + std::to_string(i) + ": expert prediction " +
                 format_double(e) + " outside [0,1]");
      (*ds.expert)[i] = e;
    }
    for (std::size_t j = 0; j < feat_idx.size(); ++j)
      ds.features.at(i, j) = cell_value(feat_idx[j]);
    for (std::size_t j = 0; j < fb_idx.size(); ++j)
      ds.feedback->at(i, j) = cell_value(fb_idx[j]);
    ds.row_ids[i] = id_idx ? cells[*id_idx] : std::to_string(i);
  }
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds,
                         char delimiter = ',') {
  std::ofstream out(path);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out << "row_id";
  for (const auto& f : ds.feature_names) out << delimiter << f;
  out << delimiter << "y";
  if (ds.expert) out << delimiter << "expert";
  for (const auto& f : ds.feedback_names) out << delimiter << f;
  out << "\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    out << ds.row_ids[i];
    for (std::size_t j = 0; j < ds.d(); ++j)
      out << delimiter << format_double(ds.features.at(i, j));
    out << delimiter << format_double(ds.outcome[i]);
    if (ds.expert) out << delimiter << format_double((*ds.expert)[i]);
    if (ds.feedback)
      for (std::size_t j = 0; j < ds.feedback->cols; ++j)
        out << delimiter << format_double(ds.feedback->at(i, j));
    out << "\n";
  }
}

// schema matching the layout save_dataset writes
inline DatasetSchema saved_dataset_schema(const Dataset& ds, char delimiter = ',') {
  DatasetSchema s;
  s.outcome_col = "y";
  if (ds.expert) s.expert_col = "expert";
  s.feature_cols = ds.feature_names;
  s.feedback_cols = ds.feedback_names;
  s.id_col = "row_id";
  s.delimiter = delimiter;
  return s;
}

inline PredictionMatrix load_predictions(const std::string& path, const Dataset& ds,
                                         char delimiter = ',') {
  auto rows = detail::read_table(path, delimiter);
  const auto& header = rows.front();
  std::size_t n = rows.size() - 1;
  if (n != ds.n())
    fail(errc::row_count_mismatch, path + " has " + std::to_string(n) +
                                       " rows, dataset has " + std::to_string(ds.n()));
  PredictionMatrix pm;
  pm.model_names = header;
  pm.preds = Matrix(n, header.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cells = rows[i + 1];
    if (cells.size() != header.size())
      fail(errc::parse_error, path + " row " + std::to_string(i) + ": ragged row");
    for (std::size_t j = 0; j < header.size(); ++j) {
      double v;
      if (!detail::parse_double_strict(cells[j], v))
        fail(errc::parse_error, path + " row " + std::to_string(i) + " model '" +
                                    header[j] + "': cannot parse '" + cells[j] + "'");
      if (v < 0.0 || v > 1.0)
        fail(errc::out_of_range, path + " row " + std::to_string(i) + " model '" +
                                     header[j] + "': " + format_double(v) +
                                     " outside [0,1]");
      pm.preds.at(i, j) = v;
    }
  }
  return pm;
}

inline void save_predictions(const std::string& path, const PredictionMatrix& pm,
                             char delimiter = ',') {
  std::ofstream out(path);
  if (!out) fail(errc::io_error, "cannot write " + path);
  for (std::size_t j = 0; j < pm.m(); ++j)
    out << (j ? std::string(1, delimiter) : "") << pm.model_names[j];
  out << "\n";
  for (std::size_t i = 0; i < pm.n(); ++i) {
    for (std::size_t j = 0; j < pm.m(); ++j)
      out << (j ? std::string(1, delimiter) : "") << format_double(pm.preds.at(i, j));
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// partition serialization: two columns, row_id and cell index

inline void save_partition(const std::string& path, const Partition& p,
                           const std::vector<std::string>& row_ids) {
  if (row_ids.size() != p.n())
    fail(errc::row_count_mismatch, "partition/row_ids length mismatch");
  std::ofstream out(path);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out << "row_id,cell\n";
  for (std::size_t i = 0; i < p.n(); ++i)
    out << row_ids[i] << "," << p.assignment[i] << "\n";
}

inline Partition load_partition(const std::string& path, const Dataset& ds) {
  auto rows = detail::read_table(path, ',');
  if (rows.size() - 1 != ds.n())
    fail(errc::row_count_mismatch, path + " has " + std::to_string(rows.size() - 1) +
                                       " rows, dataset has " + std::to_string(ds.n()));
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < ds.n(); ++i) by_id[ds.row_ids[i]] = i;
  std::vector<int> assignment(ds.n(), -1);
  int max_cell = -1;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2)
      fail(errc::parse_error, path + " row " + std::to_string(r - 1) +
                                  ": expected row_id,cell");
    auto it = by_id.find(rows[r][0]);
    if (it == by_id.end())
      fail(errc::parse_error,
           path + ": row_id '" + rows[r][0] + "' not present in dataset");
    double cell_raw;
    if (!detail::parse_double_strict(rows[r][1], cell_raw) ||
        cell_raw != static_cast<int>(cell_raw) || cell_raw < 0)
      fail(errc::parse_error, path + ": bad cell index '" + rows[r][1] + "'");
    if (assignment[it->second] != -1)
      fail(errc::parse_error, path + ": duplicate row_id '" + rows[r][0] + "'");
    assignment[it->second] = static_cast<int>(cell_raw);
    max_cell = std::max(max_cell, assignment[it->second]);
  }
  return make_partition(std::move(assignment), max_cell + 1, Provenance::external);
}

// ---------------------------------------------------------------------------
// deterministic train/test split

inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                         double test_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(test_fraction > 0.0) ||
      std::abs(train_fraction + test_fraction - 1.0) > 1e-9)
    fail(errc::bad_fraction, "fractions must be positive and sum to 1, got " +
                                 format_double(train_fraction) + "/" +
                                 format_double(test_fraction));
  std::size_t n = ds.n();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, /*stream=*/0x5F17));
  rng.shuffle(order);
  std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
  n_train = std::min(n_train, n);
  std::vector<std::size_t> train_rows(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> test_rows(order.begin() + n_train, order.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  auto take = [&](const std::vector<std::size_t>& idx) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.feedback_names = ds.feedback_names;
    out.features = Matrix(idx.size(), ds.d());
    out.outcome.resize(idx.size());
    if (ds.expert) out.expert = std::vector<double>(idx.size());
    if (ds.feedback) out.feedback = Matrix(idx.size(), ds.feedback->cols);
    out.row_ids.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::size_t i = idx[r];
      for (std::size_t j = 0; j < ds.d(); ++j)
        out.features.at(r, j) = ds.features.at(i, j);
      out.outcome[r] = ds.outcome[i];
      if (ds.expert) (*out.expert)[r] = (*ds.expert)[i];
      if (ds.feedback)
        for (std::size_t j = 0; j < ds.feedback->cols; ++j)
          out.feedback->at(r, j) = ds.feedback->at(i, j);
      out.row_ids[r] = ds.row_ids[i];
    }
    return out;
  };
  return {take(train_rows), take(test_rows)};
}

}  // namespace indist
