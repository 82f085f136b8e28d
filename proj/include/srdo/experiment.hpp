#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "srdo/decorrelate.hpp"
#include "srdo/estimators.hpp"
#include "srdo/evaluation.hpp"
#include "srdo/ingest.hpp"
#include "srdo/simgen.hpp"

namespace srdo {

/// One entry of the experiment's method list. Grids with more than one point
/// are tuned by k-fold cross validation.
struct MethodSpec {
  std::string name;
  Method method = Method::ols;
  bool use_srdo = false;
  std::vector<double> lambda1_grid{0.0};
  std::vector<double> lambda2_grid{0.0};
  int cv_folds = 5;
};

struct SimulationSource {
  SimulationConfig config;
  std::vector<double> rho_tests;
};

struct CsvSource {
  std::string path;
  std::string target_column;
  std::string environment_column;
  EnvironmentSplit split;
  bool log_target = false;
};

struct ExperimentConfig {
  Task task = Task::regression;
  std::variant<SimulationSource, CsvSource> source;
  std::vector<MethodSpec> methods;
  SrdoConfig srdo_config;
  int repetitions = 1;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  int jobs = 1;

  void validate() const {
    if (methods.empty()) throw Error("experiment needs at least one method");
    if (repetitions < 1) throw Error("repetitions must be >= 1");
    if (jobs < 1) throw Error("jobs must be >= 1");
    srdo_config.validate();
    if (const auto* sim = std::get_if<SimulationSource>(&source)) sim->config.validate();
  }
};

struct RunRecord {
  std::string method;
  int repetition = 0;
  bool failed = false;
  std::string error;
  std::optional<double> beta_err;
  double train_metric = 0.0;  // training RMSE (regression) or log-loss (binary)
  std::vector<double> per_environment;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool converged = true;
};

struct MethodSummary {
  std::string name;
  /// Per-environment metrics of the repetition with the lowest training
  /// error (the optimistic selection); repetitions holds the count of
  /// successful runs.
  EvaluationReport headline;
  int selected_repetition = 0;
  std::optional<double> mean_beta_error;
  std::optional<double> std_beta_error;
  /// Per-environment metric averaged over all successful repetitions, for
  /// auditing the optimistic selection, plus its mean/std across environments.
  std::vector<double> all_run_mean_per_environment;
  double all_run_mean_metric = 0.0;
  double all_run_std_metric = 0.0;
  int failures = 0;
};

struct ExperimentResult {
  MetricKind metric_kind = MetricKind::rmse;
  std::vector<std::string> environment_tags;
  std::vector<MethodSummary> methods;
  std::vector<RunRecord> records;  // ordered by (repetition, method)
  /// Reweighting vector per repetition (empty when no method used SRDO).
  std::vector<Vector> srdo_weights_per_repetition;
};

namespace detail {

struct PreparedData {
  LabeledDataset train_std;                // standardized training design
  std::vector<LabeledDataset> eval_envs;   // environments used for evaluation
  std::optional<Scaler> scaler;            // set when coefficients need unscaling
  std::vector<LabeledDataset> eval_envs_raw;  // raw-coordinate environments (simulation)
};

inline PreparedData prepare_simulation(const SimulationSource& source, std::uint64_t rep_seed) {
  SimulationConfig cfg = source.config;
  cfg.seed = derive_seed(rep_seed, 0);
  EnvironmentSuite suite = generate_environment_suite(cfg, source.rho_tests);

  PreparedData out;
  auto [X_std, scaler] = standardize(suite.train.X);
  out.train_std.X = std::move(X_std);
  out.train_std.y = suite.train.y;
  out.train_std.environment_tag = suite.train.environment_tag;
  out.scaler = std::move(scaler);
  out.eval_envs_raw = std::move(suite.tests);
  return out;
}

/// Bins usable for evaluation: nonempty, and for AUC both classes present.
inline bool evaluable(const LabeledDataset& env, MetricKind kind) {
  if (env.X.rows() == 0) return false;
  if (kind == MetricKind::auc) {
    bool pos = false, neg = false;
    for (Eigen::Index i = 0; i < env.y.values.size(); ++i)
      (env.y.values[i] > 0 ? pos : neg) = true;
    return pos && neg;
  }
  return true;
}

inline PreparedData prepare_csv(const CsvSource& source, Task task, MetricKind kind) {
  RawTable table = load_csv(source.path, source.target_column, source.environment_column, task);
  if (source.log_target) {
    if (task != Task::regression) throw Error("log_target applies to regression only");
    for (Eigen::Index i = 0; i < table.target.size(); ++i) {
      if (!(table.target[i] > 0.0)) throw Error("log_target requires positive targets");
      table.target[i] = std::log(table.target[i]);
    }
  }
  SplitResult split = split_environments(table, source.split);

  PreparedData out;
  out.train_std = split.bins[static_cast<std::size_t>(source.split.train_bin_index)];
  for (LabeledDataset& bin : split.bins)
    if (evaluable(bin, kind)) out.eval_envs.push_back(std::move(bin));
  if (out.eval_envs.empty()) throw Error("no evaluable environment bins");
  return out;
}

struct RepetitionOutcome {
  std::vector<RunRecord> records;
  Vector srdo_weights;
};

inline RepetitionOutcome run_repetition(const ExperimentConfig& config,
                                        const PreparedData* shared_csv, int rep,
                                        MetricKind kind) {
  const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(rep));
  RepetitionOutcome outcome;

  PreparedData local;
  const PreparedData* data = shared_csv;
  if (shared_csv == nullptr) {
    local = prepare_simulation(std::get<SimulationSource>(config.source), rep_seed);
    data = &local;
  }

  // one reweighting per repetition, shared by every SRDO method
  bool any_srdo = false;
  for (const MethodSpec& m : config.methods) any_srdo |= m.use_srdo;
  SampleWeights srdo_w = SampleWeights::uniform(data->train_std.X.rows());
  std::string srdo_error;
  if (any_srdo) {
    try {
      SrdoConfig sc = config.srdo_config;
      sc.seed = derive_seed(rep_seed, 1);
      if (config.task == Task::binary) {
        EstimatorConfig approx_cfg;
        approx_cfg.method = Method::logistic;
        approx_cfg.lambda2 = 1e-4;
        const FitResult approx =
            fit_logistic(data->train_std.X, data->train_std.y,
                         SampleWeights::uniform(data->train_std.X.rows()), approx_cfg);
        srdo_w = classification_weights(data->train_std.X, approx.coefficients, sc);
      } else {
        srdo_w = srdo(data->train_std.X, sc).weights;
      }
      outcome.srdo_weights = srdo_w.values;
    } catch (const std::exception& e) {
      srdo_error = e.what();
    }
  }

  for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
    const MethodSpec& spec = config.methods[mi];
    RunRecord record;
    record.method = spec.name;
    record.repetition = rep;
    try {
      if (spec.use_srdo && !srdo_error.empty()) throw Error(srdo_error);
      const SampleWeights& w =
          spec.use_srdo ? srdo_w : SampleWeights::uniform(data->train_std.X.rows());

      EstimatorConfig cfg;
      cfg.method = spec.method;
      cfg.lambda1 = spec.lambda1_grid.empty() ? 0.0 : spec.lambda1_grid.front();
      cfg.lambda2 = spec.lambda2_grid.empty() ? 0.0 : spec.lambda2_grid.front();
      std::vector<std::pair<double, double>> grid;
      for (double l1 : spec.lambda1_grid)
        for (double l2 : spec.lambda2_grid) grid.emplace_back(l1, l2);
      if (grid.size() > 1) {
        Rng cv_rng(derive_seed(rep_seed, 100 + static_cast<std::uint64_t>(mi)));
        cfg = cross_validate(data->train_std.X, data->train_std.y, w, cfg, grid,
                             spec.cv_folds, cv_rng)
                  .best;
      }
      record.lambda1 = cfg.lambda1;
      record.lambda2 = cfg.lambda2;

      const FitResult fit = fit_with(data->train_std.X, data->train_std.y, w, cfg);
      record.converged = fit.converged;

      Coefficients eval_coef = fit.coefficients;  // standardized coordinates
      if (data->scaler) eval_coef = data->scaler->unscale(fit.coefficients);

      const Vector train_scores = predict(fit.coefficients, data->train_std.X);
      if (config.task == Task::regression) {
        record.train_metric = rmse(data->train_std.y.values, train_scores);
      } else {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < train_scores.size(); ++i)
          ll += detail::softplus(-data->train_std.y.values[i] * train_scores[i]);
        record.train_metric = ll / train_scores.size();
      }

      if (const auto* sim = std::get_if<SimulationSource>(&config.source))
        record.beta_err = beta_error(eval_coef, sim->config.beta_true);

      const std::vector<LabeledDataset>& envs =
          data->scaler ? data->eval_envs_raw : data->eval_envs;
      for (const LabeledDataset& env : envs) {
        const Vector scores = predict(eval_coef, env.X);
        record.per_environment.push_back(kind == MetricKind::rmse ? rmse(env.y.values, scores)
                                                                  : auc(scores, env.y.values));
      }
    } catch (const std::exception& e) {
      record.failed = true;
      record.error = e.what();
    }
    outcome.records.push_back(std::move(record));
  }
  return outcome;
}

}  // namespace detail

/// Runs the experiment protocol: per repetition, (re)generate data, reweight,
/// fit every method, and evaluate on every environment; repetition k uses the
/// child seed derive_seed(seed, k) so runs are independent and reproducible.
/// Per-method headline metrics come from the repetition with the lowest
/// training error; all-run averages are reported alongside. Individual run
/// failures are recorded and excluded unless they exceed 10% of all runs.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const MetricKind kind = config.task == Task::binary ? MetricKind::auc : MetricKind::rmse;

  detail::PreparedData csv_data;
  const detail::PreparedData* shared = nullptr;
  if (const auto* csv = std::get_if<CsvSource>(&config.source)) {
    csv_data = detail::prepare_csv(*csv, config.task, kind);
    shared = &csv_data;
  }

  std::vector<detail::RepetitionOutcome> outcomes(
      static_cast<std::size_t>(config.repetitions));
  const int workers = std::min(config.jobs, config.repetitions);
  if (workers <= 1) {
    for (int rep = 0; rep < config.repetitions; ++rep)
      outcomes[static_cast<std::size_t>(rep)] =
          detail::run_repetition(config, shared, rep, kind);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (int rep = next.fetch_add(1); rep < config.repetitions; rep = next.fetch_add(1))
          outcomes[static_cast<std::size_t>(rep)] =
              detail::run_repetition(config, shared, rep, kind);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  ExperimentResult result;
  result.metric_kind = kind;
  if (shared != nullptr) {
    for (const LabeledDataset& env : shared->eval_envs)
      result.environment_tags.push_back(env.environment_tag);
  } else {
    const auto& sim = std::get<SimulationSource>(config.source);
    for (double rho : sim.rho_tests)
      result.environment_tags.push_back("rho=" + detail::format_rho(rho));
  }

  int failures_total = 0;
  for (detail::RepetitionOutcome& outcome : outcomes) {
    result.srdo_weights_per_repetition.push_back(std::move(outcome.srdo_weights));
    for (RunRecord& record : outcome.records) {
      failures_total += record.failed ? 1 : 0;
      result.records.push_back(std::move(record));
    }
  }
  const int total_runs = config.repetitions * static_cast<int>(config.methods.size());
  if (failures_total * 10 > total_runs) {
    std::string first;
    for (const RunRecord& r : result.records)
      if (r.failed) { first = r.error; break; }
    throw Error("more than 10% of runs failed (" + std::to_string(failures_total) + "/" +
                std::to_string(total_runs) + "); first error: " + first);
  }

  for (const MethodSpec& spec : config.methods) {
    MethodSummary summary;
    summary.name = spec.name;
    std::vector<const RunRecord*> ok;
    for (const RunRecord& r : result.records) {
      if (r.method != spec.name) continue;
      if (r.failed) ++summary.failures;
      else ok.push_back(&r);
    }
    if (ok.empty()) {
      summary.headline.metric_kind = kind;
      result.methods.push_back(std::move(summary));
      continue;
    }

    if (ok.front()->beta_err) {
      double mean = 0.0;
      for (const RunRecord* r : ok) mean += *r->beta_err;
      mean /= ok.size();
      double var = 0.0;
      for (const RunRecord* r : ok) var += (*r->beta_err - mean) * (*r->beta_err - mean);
      summary.mean_beta_error = mean;
      summary.std_beta_error = std::sqrt(var / ok.size());
    }

    const RunRecord* best = ok.front();
    for (const RunRecord* r : ok)
      if (r->train_metric < best->train_metric) best = r;
    summary.selected_repetition = best->repetition;

    EvaluationReport headline;
    headline.metric_kind = kind;
    headline.repetitions = static_cast<int>(ok.size());
    headline.beta_error = best->beta_err;
    double mean = 0.0;
    for (std::size_t e = 0; e < result.environment_tags.size(); ++e) {
      headline.per_environment.emplace_back(result.environment_tags[e],
                                            best->per_environment[e]);
      mean += best->per_environment[e];
    }
    mean /= result.environment_tags.size();
    double var = 0.0;
    for (const auto& [tag, value] : headline.per_environment)
      var += (value - mean) * (value - mean);
    headline.mean_metric = mean;
    headline.std_metric = std::sqrt(var / result.environment_tags.size());
    summary.headline = std::move(headline);

    summary.all_run_mean_per_environment.assign(result.environment_tags.size(), 0.0);
    for (const RunRecord* r : ok)
      for (std::size_t e = 0; e < result.environment_tags.size(); ++e)
        summary.all_run_mean_per_environment[e] += r->per_environment[e];
    double all_mean = 0.0;
    for (double& v : summary.all_run_mean_per_environment) {
      v /= ok.size();
      all_mean += v;
    }
    all_mean /= summary.all_run_mean_per_environment.size();
    double all_var = 0.0;
    for (double v : summary.all_run_mean_per_environment)
      all_var += (v - all_mean) * (v - all_mean);
    summary.all_run_mean_metric = all_mean;
    summary.all_run_std_metric = std::sqrt(all_var / summary.all_run_mean_per_environment.size());

    result.methods.push_back(std::move(summary));
  }
  return result;
}

}  // namespace srdo
