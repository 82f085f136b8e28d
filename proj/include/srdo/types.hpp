#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "srdo/errors.hpp"

namespace srdo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Task { regression, binary };

/// n x p matrix of predictors. Column names are optional; when present there
/// must be exactly p unique names.
struct DesignMatrix {
  Matrix values;
  std::vector<std::string> column_names;  // empty means unnamed

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  void validate() const {
    if (rows() < 2 || cols() < 1)
      throw Error("design matrix needs n >= 2 rows and p >= 1 columns");
    if (!values.allFinite()) throw Error("design matrix contains non-finite entries");
    if (!column_names.empty()) {
      if (static_cast<Eigen::Index>(column_names.size()) != cols())
        throw DimensionMismatch("column_names size does not match column count");
      std::set<std::string> uniq(column_names.begin(), column_names.end());
      if (static_cast<Eigen::Index>(uniq.size()) != cols())
        throw Error("column names are not unique");
    }
  }
};

/// Length-n response; binary responses are coded -1/+1.
struct ResponseVector {
  Vector values;
  Task task = Task::regression;

  void validate() const {
    if (!values.allFinite()) throw Error("response contains non-finite entries");
    if (task == Task::binary) {
      for (Eigen::Index i = 0; i < values.size(); ++i)
        if (values[i] != 1.0 && values[i] != -1.0)
          throw Error("binary response must contain only -1/+1");
    }
  }
};

/// Nonnegative per-sample weights with unit mean (within 1e-9).
struct SampleWeights {
  Vector values;
  std::optional<std::pair<double, double>> clip_bounds;

  static SampleWeights uniform(Eigen::Index n) {
    SampleWeights w;
    w.values = Vector::Ones(n);
    return w;
  }

  /// Normalizes nonnegative raw weights to unit mean.
  static SampleWeights from_raw(Vector raw,
                                std::optional<std::pair<double, double>> bounds = {}) {
    if (raw.size() == 0) throw EmptyInput("weights");
    const double mean = raw.mean();
    if (!(mean > 0.0)) throw Error("raw weights must have positive mean");
    SampleWeights w;
    w.values = raw / mean;
    w.clip_bounds = bounds;
    w.validate();
    return w;
  }

  void validate() const {
    if (values.size() == 0) throw EmptyInput("weights");
    for (Eigen::Index i = 0; i < values.size(); ++i)
      if (!(values[i] >= 0.0) || !std::isfinite(values[i]))
        throw Error("weights must be nonnegative and finite");
    if (std::abs(values.mean() - 1.0) > 1e-9)
      throw Error("weights must have unit mean within 1e-9");
  }
};

/// Intercept plus slope vector.
struct Coefficients {
  double intercept = 0.0;
  Vector slopes;

  void validate() const {
    if (!std::isfinite(intercept) || !slopes.allFinite())
      throw Error("coefficients contain non-finite entries");
  }
};

/// Conditioning diagnostics for a (weighted) correlation matrix.
///
/// gershgorin_bound = 1 - (p-1) * max_offdiag is a lower bound on the smallest
/// eigenvalue whenever it is nonnegative-informative; weight_second_moment is
/// the empirical mean of w^2 (>= 1 for unit-mean weights), and
/// effective_sample_size = (sum w)^2 / sum w^2.
struct CorrelationDiagnostics {
  Matrix correlation;
  double smallest_eigenvalue = 0.0;
  double max_offdiag = 0.0;
  double gershgorin_bound = 0.0;
  double weight_second_moment = 1.0;
  double effective_sample_size = 0.0;
};

/// A design with its response and an optional environment tag.
struct LabeledDataset {
  DesignMatrix X;
  ResponseVector y;
  std::string environment_tag;
};

inline double mean_abs_offdiagonal(const Matrix& R) {
  const Eigen::Index p = R.rows();
  if (p < 2) return 0.0;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = j + 1; k < p; ++k) sum += std::abs(R(j, k));
  return sum / (static_cast<double>(p) * (p - 1) / 2.0);
}

}  // namespace srdo
