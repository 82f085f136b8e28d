#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srdo/types.hpp"

namespace srdo {

enum class MetricKind { rmse, auc };

inline const char* metric_name(MetricKind kind) {
  return kind == MetricKind::rmse ? "rmse" : "auc";
}

/// Per-environment metric values with their cross-environment mean and
/// population standard deviation (the stability summary).
struct EvaluationReport {
  std::optional<double> beta_error;  // regression with known truth only
  std::vector<std::pair<std::string, double>> per_environment;
  double mean_metric = 0.0;
  double std_metric = 0.0;
  int repetitions = 1;
  MetricKind metric_kind = MetricKind::rmse;
};

/// l1 distance between slope vectors; the intercept is excluded (it absorbs
/// the mean of the bias term and is not comparable across constructions).
inline double beta_error(const Coefficients& estimate, const Coefficients& truth) {
  if (estimate.slopes.size() != truth.slopes.size())
    throw DimensionMismatch("coefficient slope counts");
  return (estimate.slopes - truth.slopes).lpNorm<1>();
}

/// sqrt((1/n) sum (y_i - yhat_i)^2).
inline double rmse(const Vector& y, const Vector& y_hat) {
  if (y.size() != y_hat.size()) throw DimensionMismatch("rmse input lengths");
  if (y.size() == 0) throw EmptyInput("rmse");
  return std::sqrt((y - y_hat).squaredNorm() / y.size());
}

/// Probability that a uniformly random positive outscores a uniformly random
/// negative, ties counted 1/2. Computed from the rank statistic; identical to
/// the O(n^2) pairwise count (average ranks keep tie contributions exact).
inline double auc(const Vector& scores, const Vector& labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch("auc input lengths");
  const Eigen::Index n = scores.size();
  Eigen::Index n_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] != 1.0 && labels[i] != -1.0) throw Error("auc labels must be -1/+1");
    if (labels[i] == 1.0) ++n_pos;
  }
  const Eigen::Index n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw OneClassOnly();

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });

  // rank sum of positives with average ranks over tie groups
  double rank_sum_pos = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (Eigen::Index k = i; k < j; ++k)
      if (labels[order[k]] == 1.0) rank_sum_pos += avg_rank;
    i = j;
  }
  const double wins_plus_half_ties =
      rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return wins_plus_half_ties / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline Vector predict(const Coefficients& model, const DesignMatrix& X) {
  if (model.slopes.size() != X.cols()) throw DimensionMismatch("model/design column count");
  return (X.values * model.slopes).array() + model.intercept;
}

/// Applies the model to every environment and reports the metric per
/// environment (suite order) plus cross-environment mean and population std.
/// For classification the score is beta0 + x.beta and the metric is AUC.
inline EvaluationReport evaluate_suite(const Coefficients& model,
                                       const std::vector<LabeledDataset>& suite,
                                       MetricKind metric_kind) {
  if (suite.empty()) throw EmptyInput("evaluation suite");
  EvaluationReport report;
  report.metric_kind = metric_kind;
  for (const LabeledDataset& env : suite) {
    const Vector scores = predict(model, env.X);
    const double value = metric_kind == MetricKind::rmse ? rmse(env.y.values, scores)
                                                         : auc(scores, env.y.values);
    report.per_environment.emplace_back(env.environment_tag, value);
  }
  double mean = 0.0;
  for (const auto& [tag, value] : report.per_environment) mean += value;
  mean /= report.per_environment.size();
  double var = 0.0;
  for (const auto& [tag, value] : report.per_environment) var += (value - mean) * (value - mean);
  var /= report.per_environment.size();
  report.mean_metric = mean;
  report.std_metric = std::sqrt(var);
  return report;
}

}  // namespace srdo
