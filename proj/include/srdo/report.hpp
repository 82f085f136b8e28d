#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "srdo/config.hpp"
#include "srdo/version.hpp"

namespace srdo {

using Json = nlohmann::json;

/// Shortest round-trip decimal representation, for CSV cells.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  // prefer the shorter %g form when it round-trips
  char shorter[32];
  for (int prec = 1; prec < 17; ++prec) {
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
    double back;
    std::sscanf(shorter, "%lf", &back);
    if (back == x) return shorter;
  }
  return buf;
}

/// Writes content to a temporary file in the target directory, then renames
/// it over the destination, so readers never observe a partial file.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out << content;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Json to_json(const Coefficients& c) {
  Json j;
  j["intercept"] = c.intercept;
  j["slopes"] = std::vector<double>(c.slopes.data(), c.slopes.data() + c.slopes.size());
  return j;
}

inline Coefficients coefficients_from_json(const Json& j) {
  Coefficients c;
  c.intercept = j.at("intercept").get<double>();
  const std::vector<double> slopes = j.at("slopes").get<std::vector<double>>();
  c.slopes = Eigen::Map<const Vector>(slopes.data(), static_cast<Eigen::Index>(slopes.size()));
  return c;
}

inline Json to_json(const CorrelationDiagnostics& d) {
  Json j;
  j["smallest_eigenvalue"] = d.smallest_eigenvalue;
  j["max_offdiag"] = d.max_offdiag;
  j["mean_abs_offdiag"] = mean_abs_offdiagonal(d.correlation);
  j["gershgorin_bound"] = d.gershgorin_bound;
  j["weight_second_moment"] = d.weight_second_moment;
  j["effective_sample_size"] = d.effective_sample_size;
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < d.correlation.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(d.correlation.cols()));
    for (Eigen::Index k = 0; k < d.correlation.cols(); ++k)
      row[static_cast<std::size_t>(k)] = d.correlation(i, k);
    rows.push_back(std::move(row));
  }
  j["correlation"] = rows;
  return j;
}

inline Json to_json(const SrdoConfig& c) {
  Json j;
  j["weight_clip"] = {c.weight_clip_lo, c.weight_clip_hi};
  j["regularization"] = c.classifier_regularization;
  j["max_iterations"] = c.classifier_max_iterations;
  j["replicas"] = c.resample_replicas;
  j["seed"] = c.seed;
  j["quadratic_expansion"] = c.quadratic_expansion;
  j["confidence_tau"] = c.confidence_tau;
  return j;
}

inline Json to_json(const SrdoResult& r) {
  Json j;
  j["before"] = to_json(r.before);
  j["after"] = to_json(r.after);
  j["no_improvement"] = r.no_improvement;
  j["classifier"] = {{"iterations", r.model.training_meta.iterations},
                     {"final_loss", r.model.training_meta.final_loss},
                     {"converged", r.model.training_meta.converged},
                     {"quadratic", r.model.quadratic},
                     {"seed", r.model.training_meta.seed}};
  return j;
}

inline const char* bias_kind_name(BiasKind kind) {
  return kind == BiasKind::eigvec_sign ? "sign" : "linear";
}

inline Json to_json(const SimulationConfig& c) {
  Json j;
  j["n"] = c.n;
  j["p"] = c.spec.p;
  j["s"] = c.spec.s;
  j["rho_per_block"] = c.spec.rho_per_block;
  j["beta"] = to_json(c.beta_true);
  j["noise_std"] = c.noise_std;
  j["seed"] = c.seed;
  j["bias_kind"] = bias_kind_name(c.bias_kind);
  j["bias_scale"] = c.bias_scale;
  j["reuse_train_bias_direction"] = c.reuse_train_bias_direction;
  return j;
}

inline const char* method_name(Method m) {
  switch (m) {
    case Method::ols: return "ols";
    case Method::lasso: return "lasso";
    case Method::elastic_net: return "elastic_net";
    case Method::ulasso: return "ulasso";
    case Method::iilasso: return "iilasso";
    case Method::logistic: return "logistic";
  }
  return "?";
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["task"] = c.task == Task::binary ? "binary" : "regression";
  j["seed"] = c.seed;
  j["repetitions"] = c.repetitions;
  j["jobs"] = c.jobs;
  j["output"] = c.output_dir;
  if (const auto* sim = std::get_if<SimulationSource>(&c.source)) {
    j["simulation"] = to_json(sim->config);
    j["simulation"]["rho_test"] = sim->rho_tests;
  } else {
    const auto& csv = std::get<CsvSource>(c.source);
    j["csv"] = {{"path", csv.path},
                {"target", csv.target_column},
                {"environment", csv.environment_column},
                {"bins", csv.split.bin_edges},
                {"train_bin", csv.split.train_bin_index},
                {"log_target", csv.log_target}};
  }
  j["srdo"] = to_json(c.srdo_config);
  Json methods = Json::array();
  for (const MethodSpec& m : c.methods) {
    methods.push_back({{"name", m.name},
                       {"estimator", method_name(m.method)},
                       {"use_srdo", m.use_srdo},
                       {"lambda1_grid", m.lambda1_grid},
                       {"lambda2_grid", m.lambda2_grid},
                       {"folds", m.cv_folds}});
  }
  j["methods"] = methods;
  return j;
}

inline Json to_json(const EvaluationReport& r) {
  Json j;
  if (r.beta_error) j["beta_error"] = *r.beta_error;
  Json envs = Json::array();
  for (const auto& [tag, value] : r.per_environment) envs.push_back({{"tag", tag}, {"value", value}});
  j["per_environment"] = envs;
  j["mean"] = r.mean_metric;
  j["std"] = r.std_metric;
  j["repetitions"] = r.repetitions;
  j["metric"] = metric_name(r.metric_kind);
  return j;
}

inline Json to_json(const ExperimentResult& r, const ExperimentConfig& config) {
  Json j;
  j["version"] = version;
  j["config"] = to_json(config);
  j["metric"] = metric_name(r.metric_kind);
  j["environments"] = r.environment_tags;
  j["conventions"] = {
      {"moments", "population (divide by n)"},
      {"loss_scaling", "mean loss: squared error uses 1/(2n), logistic uses 1/n"},
      {"std_across_environments", "population std of per-environment metrics"},
      {"headline_selection", "repetition with lowest training error"}};
  Json methods = Json::array();
  for (const MethodSummary& m : r.methods) {
    Json mj;
    mj["name"] = m.name;
    mj["headline"] = to_json(m.headline);
    mj["selected_repetition"] = m.selected_repetition;
    if (m.mean_beta_error) mj["mean_beta_error"] = *m.mean_beta_error;
    if (m.std_beta_error) mj["std_beta_error_across_repetitions"] = *m.std_beta_error;
    mj["all_run_mean_per_environment"] = m.all_run_mean_per_environment;
    mj["all_run_mean"] = m.all_run_mean_metric;
    mj["all_run_std"] = m.all_run_std_metric;
    mj["failures"] = m.failures;
    methods.push_back(std::move(mj));
  }
  j["methods"] = methods;
  return j;
}

inline std::string runs_csv(const ExperimentResult& r) {
  std::string out =
      "method,repetition,environment,metric,value,beta_error,train_metric,lambda1,lambda2,"
      "converged,selected\n";
  for (const RunRecord& record : r.records) {
    if (record.failed) continue;
    int selected_rep = -1;
    for (const MethodSummary& m : r.methods)
      if (m.name == record.method) selected_rep = m.selected_repetition;
    for (std::size_t e = 0; e < r.environment_tags.size(); ++e) {
      out += record.method + ',' + std::to_string(record.repetition) + ",\"" +
             r.environment_tags[e] + "\"," + metric_name(r.metric_kind) + ',' +
             format_double(record.per_environment[e]) + ',' +
             (record.beta_err ? format_double(*record.beta_err) : std::string()) + ',' +
             format_double(record.train_metric) + ',' + format_double(record.lambda1) + ',' +
             format_double(record.lambda2) + ',' + (record.converged ? "1" : "0") + ',' +
             (record.repetition == selected_rep ? "1" : "0") + '\n';
    }
  }
  return out;
}

/// CSV with columns x1..xp (or the design's own names) and the target column.
inline std::string dataset_csv(const DesignMatrix& X, const ResponseVector& y,
                               const std::string& target_name = "y") {
  std::string out;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    out += X.column_names.empty() ? "x" + std::to_string(j + 1) : X.column_names[static_cast<std::size_t>(j)];
    out += ',';
  }
  out += target_name;
  out += '\n';
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      out += format_double(X.values(i, j));
      out += ',';
    }
    out += format_double(y.values[i]);
    out += '\n';
  }
  return out;
}

inline std::string weights_csv(const Vector& w) {
  std::string out = "weight\n";
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    out += format_double(w[i]);
    out += '\n';
  }
  return out;
}

}  // namespace srdo
