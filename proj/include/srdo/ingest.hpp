#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "srdo/core.hpp"

namespace srdo {

/// Bins over a numeric stratification column. Intervals are left-closed
/// right-open, except the final interval which is right-closed, so the edges
/// partition [first, last] exactly.
struct EnvironmentSplit {
  std::string environment_column;
  std::vector<double> bin_edges;
  int train_bin_index = 0;

  int bin_count() const { return static_cast<int>(bin_edges.size()) - 1; }

  void validate() const {
    if (bin_edges.size() < 2) throw Error("environment split needs at least 2 bin edges");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
      if (!(bin_edges[i] > bin_edges[i - 1])) throw Error("bin edges must strictly increase");
    if (train_bin_index < 0 || train_bin_index >= bin_count())
      throw Error("train_bin_index outside bin count");
  }

  /// Bin index of a value; `row` is only used for the error message.
  int bin_of(double value, std::size_t row) const {
    if (value < bin_edges.front() || value > bin_edges.back()) throw RowOutOfRange(row, value);
    if (value == bin_edges.back()) return bin_count() - 1;
    int lo = 0, hi = bin_count() - 1;
    while (lo < hi) {
      const int mid = (lo + hi + 1) / 2;
      if (value >= bin_edges[static_cast<std::size_t>(mid)]) lo = mid;
      else hi = mid - 1;
    }
    return lo;
  }

  std::string tag(int bin) const {
    char buf[64];
    const char close = (bin == bin_count() - 1) ? ']' : ')';
    std::snprintf(buf, sizeof(buf), "[%g, %g%c", bin_edges[static_cast<std::size_t>(bin)],
                  bin_edges[static_cast<std::size_t>(bin) + 1], close);
    return buf;
  }
};

/// Parsed CSV with the target and environment columns pulled out of the
/// feature block. Binary targets are mapped to -1/+1; `label_mapping` records
/// how.
struct RawTable {
  std::vector<std::string> feature_names;
  Matrix features;
  Vector target;
  Vector environment;  // empty when no environment column was requested
  Task task = Task::regression;
  std::string target_column;
  std::string environment_column;
  std::string label_mapping;
};

namespace detail {

/// Splits one CSV record, honoring double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_record(const std::string& line, std::size_t row) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      if (!cell.empty()) throw ParseError(row, cells.size() + 1, "stray quote");
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (quoted) throw ParseError(row, cells.size() + 1, "unterminated quote");
  cells.push_back(std::move(cell));
  return cells;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

/// Strict full-string numeric parse ('.' decimal separator, scientific
/// notation accepted).
inline bool parse_double(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char* begin = t.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + t.size() && std::isfinite(out);
}

}  // namespace detail

/// Loads a CSV with a header row. Every feature cell must parse as a number;
/// rows with missing or non-numeric feature cells are rejected with
/// NonNumericCell (1-based data-row index). The environment column name may be
/// empty when no environment split is wanted.
///
/// Binary target encodings accepted: {0,1}, {-1,+1}, or exactly two distinct
/// string labels (lexicographically smaller -> -1).
inline RawTable load_csv(const std::string& path, const std::string& target_column,
                         const std::string& environment_column, Task task) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, 0, "missing header row");
  const std::vector<std::string> header = detail::split_csv_record(line, 0);

  auto column_index = [&](const std::string& name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const std::ptrdiff_t target_idx = column_index(target_column);
  if (target_idx < 0) throw MissingColumn(target_column);
  std::ptrdiff_t env_idx = -1;
  if (!environment_column.empty()) {
    env_idx = column_index(environment_column);
    if (env_idx < 0) throw MissingColumn(environment_column);
  }

  RawTable table;
  table.task = task;
  table.target_column = target_column;
  table.environment_column = environment_column;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (static_cast<std::ptrdiff_t>(j) != target_idx && static_cast<std::ptrdiff_t>(j) != env_idx)
      table.feature_names.push_back(header[j]);
  }

  std::vector<std::vector<double>> feature_rows;
  std::vector<std::string> target_cells;
  std::vector<double> env_values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.eof()) break;
    ++row;
    const std::vector<std::string> cells = detail::split_csv_record(line, row);
    if (cells.size() != header.size())
      throw ParseError(row, cells.size(), "expected " + std::to_string(header.size()) + " cells");

    std::vector<double> feats;
    feats.reserve(table.feature_names.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (static_cast<std::ptrdiff_t>(j) == target_idx) continue;
      double value;
      if (static_cast<std::ptrdiff_t>(j) == env_idx) {
        if (!detail::parse_double(cells[j], value)) throw NonNumericCell(row, j + 1);
        env_values.push_back(value);
      } else {
        if (!detail::parse_double(cells[j], value)) throw NonNumericCell(row, j + 1);
        feats.push_back(value);
      }
    }
    feature_rows.push_back(std::move(feats));
    target_cells.push_back(detail::trim(cells[static_cast<std::size_t>(target_idx)]));
  }
  if (feature_rows.empty()) throw EmptyInput("csv has no data rows");

  const Eigen::Index n = static_cast<Eigen::Index>(feature_rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(table.feature_names.size());
  table.features.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      table.features(i, j) = feature_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  if (env_idx >= 0) {
    table.environment.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) table.environment[i] = env_values[static_cast<std::size_t>(i)];
  }

  table.target.resize(n);
  if (task == Task::regression) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double value;
      if (!detail::parse_double(target_cells[static_cast<std::size_t>(i)], value))
        throw NonNumericCell(static_cast<std::size_t>(i) + 1,
                             static_cast<std::size_t>(target_idx) + 1);
      table.target[i] = value;
    }
    table.label_mapping = "numeric";
  } else {
    std::map<std::string, Eigen::Index> labels;
    for (const std::string& cell : target_cells) labels.emplace(cell, 0);
    if (labels.size() != 2) throw Error("binary target must have exactly two distinct labels");
    const std::string neg = labels.begin()->first, pos = std::next(labels.begin())->first;
    // numeric encodings {0,1} and {-1,+1} keep their natural signs; otherwise
    // the lexicographically smaller label maps to -1
    double neg_num, pos_num;
    if (detail::parse_double(neg, neg_num) && detail::parse_double(pos, pos_num) &&
        ((neg_num == 0.0 && pos_num == 1.0) || (neg_num == -1.0 && pos_num == 1.0))) {
      table.label_mapping = neg + " -> -1, " + pos + " -> +1";
    } else {
      table.label_mapping = "'" + neg + "' -> -1, '" + pos + "' -> +1";
    }
    for (Eigen::Index i = 0; i < n; ++i)
      table.target[i] = (target_cells[static_cast<std::size_t>(i)] == neg) ? -1.0 : 1.0;
  }
  return table;
}

struct SplitResult {
  std::vector<LabeledDataset> bins;  // in edge order; empty bins retained
  Scaler scaler;                     // train-bin standardization statistics
};

/// Assigns every row to exactly one bin and standardizes ALL bins with the
/// train bin's per-column statistics (test bins therefore need not have mean
/// zero). Throws RowOutOfRange for environment values outside the edge span.
inline SplitResult split_environments(const RawTable& table, const EnvironmentSplit& split) {
  split.validate();
  if (table.environment.size() != table.features.rows())
    throw Error("table has no environment column");

  const Eigen::Index n = table.features.rows();
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(split.bin_count()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int bin = split.bin_of(table.environment[i], static_cast<std::size_t>(i) + 1);
    members[static_cast<std::size_t>(bin)].push_back(i);
  }

  const std::vector<Eigen::Index>& train_rows =
      members[static_cast<std::size_t>(split.train_bin_index)];
  if (train_rows.size() < 2) throw Error("train bin has fewer than 2 rows");

  DesignMatrix train_X;
  train_X.column_names = table.feature_names;
  train_X.values.resize(static_cast<Eigen::Index>(train_rows.size()), table.features.cols());
  for (std::size_t r = 0; r < train_rows.size(); ++r)
    train_X.values.row(static_cast<Eigen::Index>(r)) = table.features.row(train_rows[r]);
  Scaler scaler = standardize(train_X).second;

  SplitResult out;
  out.scaler = scaler;
  for (int b = 0; b < split.bin_count(); ++b) {
    const std::vector<Eigen::Index>& rows = members[static_cast<std::size_t>(b)];
    LabeledDataset ds;
    ds.environment_tag = split.tag(b);
    ds.X.column_names = table.feature_names;
    ds.X.values.resize(static_cast<Eigen::Index>(rows.size()), table.features.cols());
    ds.y.task = table.task;
    ds.y.values.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      ds.X.values.row(static_cast<Eigen::Index>(r)) = table.features.row(rows[r]);
      ds.y.values[static_cast<Eigen::Index>(r)] = table.target[rows[r]];
    }
    if (!rows.empty()) ds.X.values = scaler.apply(ds.X.values);
    out.bins.push_back(std::move(ds));
  }
  return out;
}

}  // namespace srdo
