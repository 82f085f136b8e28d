// Command-line front end: simulate / reweight / fit / evaluate / experiment.
//
// Exit codes: 0 success, 1 usage or config error, 2 data or convergence error.
// Every output file is written atomically (temp file + rename) and every run
// is fully determined by its config file, flags, and seed.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "srdo/config.hpp"
#include "srdo/report.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

srdo::DesignMatrix table_features(const srdo::RawTable& table) {
  srdo::DesignMatrix X;
  X.values = table.features;
  X.column_names = table.feature_names;
  return X;
}

/// Loads a data CSV where the target column may be absent (features only).
srdo::RawTable load_data(const std::string& path, const std::string& target, srdo::Task task) {
  try {
    return srdo::load_csv(path, target, "", task);
  } catch (const srdo::MissingColumn&) {
    // no target column: treat every column as a feature with a zero target
    std::ifstream in(path);
    if (!in) throw srdo::Error("cannot open file: " + path);
    std::string header;
    std::getline(in, header);
    const auto names = srdo::detail::split_csv_record(header, 0);
    if (names.empty()) throw srdo::Error("empty header in " + path);
    // reuse the loader by designating the first column as target, then undo
    srdo::RawTable t = srdo::load_csv(path, names.front(), "", srdo::Task::regression);
    srdo::RawTable out;
    out.feature_names.push_back(names.front());
    for (const auto& n : t.feature_names) out.feature_names.push_back(n);
    out.features.resize(t.features.rows(), t.features.cols() + 1);
    out.features.col(0) = t.target;
    out.features.rightCols(t.features.cols()) = t.features;
    out.target = srdo::Vector::Zero(t.features.rows());
    out.task = task;
    return out;
  }
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::string& out_dir) {
  const srdo::IniFile ini = srdo::load_ini(config_path);
  const srdo::ExperimentSectionDefaults exp = srdo::parse_experiment_section(ini);
  auto [sim, rho_tests] = srdo::parse_simulation_section(ini, seed.value_or(exp.seed));
  if (seed) sim.seed = *seed;

  const srdo::EnvironmentSuite suite = srdo::generate_environment_suite(sim, rho_tests);
  const fs::path dir(out_dir);

  srdo::Json sidecar;
  sidecar["version"] = srdo::version;
  sidecar["config"] = srdo::to_json(sim);
  sidecar["config"]["rho_test"] = rho_tests;
  srdo::Json envs = srdo::Json::array();

  const auto write_env = [&](const srdo::LabeledDataset& data, const srdo::EnvironmentMeta& meta,
                             const std::string& file) {
    srdo::atomic_write_file(dir / file, srdo::dataset_csv(data.X, data.y));
    srdo::Json e;
    e["tag"] = meta.tag;
    e["file"] = file;
    e["rho"] = meta.rho;
    e["seed"] = meta.seed;
    e["gamma_sq"] = meta.gamma_sq;
    e["degenerate_eigenspace"] = meta.degenerate;
    e["bias_direction"] = std::vector<double>(
        meta.bias_direction.data(), meta.bias_direction.data() + meta.bias_direction.size());
    envs.push_back(std::move(e));
  };

  write_env(suite.train, suite.train_meta, "train.csv");
  for (std::size_t k = 0; k < suite.tests.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "test_%02zu.csv", k);
    write_env(suite.tests[k], suite.test_meta[k], name);
  }
  sidecar["environments"] = envs;
  srdo::atomic_write_file(dir / "simulation.json", sidecar.dump(2) + "\n");
  std::cout << "wrote " << (suite.tests.size() + 1) << " environments to " << dir.string()
            << "\n";
  return 0;
}

int cmd_reweight(const std::string& data_path, const std::string& config_path,
                 const std::string& target, const std::string& out_dir) {
  srdo::SrdoConfig cfg;
  if (!config_path.empty()) {
    const srdo::IniFile ini = srdo::load_ini(config_path);
    const srdo::ExperimentSectionDefaults exp = srdo::parse_experiment_section(ini);
    cfg = srdo::parse_srdo_section(ini, exp.seed);
  }
  const srdo::RawTable table = load_data(data_path, target, srdo::Task::regression);
  auto [X, scaler] = srdo::standardize(table_features(table));

  const srdo::SrdoResult result = srdo::srdo(X, cfg);
  const fs::path dir(out_dir);
  srdo::atomic_write_file(dir / "weights.csv", srdo::weights_csv(result.weights.values));

  srdo::Json report = srdo::to_json(result);
  report["version"] = srdo::version;
  report["config"] = srdo::to_json(cfg);
  report["data"] = {{"path", data_path}, {"n", X.rows()}, {"p", X.cols()}};
  srdo::atomic_write_file(dir / "reweight.json", report.dump(2) + "\n");
  std::cout << "xi " << result.before.max_offdiag << " -> " << result.after.max_offdiag
            << ", gamma^2 " << result.before.smallest_eigenvalue << " -> "
            << result.after.smallest_eigenvalue
            << (result.no_improvement ? " (no improvement; uniform weights)" : "") << "\n";
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& weights_path,
            const std::string& method, double lambda1, double lambda2,
            const std::string& target, bool no_standardize, const std::string& out_path) {
  srdo::EstimatorConfig cfg;
  cfg.method = srdo::detail::method_from_name(method, 0);
  cfg.lambda1 = lambda1;
  cfg.lambda2 = lambda2;

  const srdo::Task task =
      cfg.method == srdo::Method::logistic ? srdo::Task::binary : srdo::Task::regression;
  const srdo::RawTable table = srdo::load_csv(data_path, target, "", task);
  srdo::DesignMatrix X = table_features(table);
  srdo::ResponseVector y{table.target, task};

  std::optional<srdo::Scaler> scaler;
  if (!no_standardize) {
    auto [Xs, sc] = srdo::standardize(X);
    X = std::move(Xs);
    scaler = std::move(sc);
  }

  srdo::SampleWeights w = srdo::SampleWeights::uniform(X.rows());
  if (!weights_path.empty()) {
    const srdo::RawTable wt = srdo::load_csv(weights_path, "weight", "", srdo::Task::regression);
    w = srdo::SampleWeights::from_raw(wt.target);
  }
  if (w.values.size() != X.rows()) throw srdo::DimensionMismatch("weights/data row count");

  const srdo::FitResult fit = srdo::fit_with(X, y, w, cfg);
  const srdo::Coefficients out_coef =
      scaler ? scaler->unscale(fit.coefficients) : fit.coefficients;

  srdo::Json j;
  j["version"] = srdo::version;
  j["method"] = method;
  j["lambda1"] = lambda1;
  j["lambda2"] = lambda2;
  j["model"] = srdo::to_json(out_coef);
  if (!table.feature_names.empty()) j["model"]["columns"] = table.feature_names;
  j["standardized_internally"] = !no_standardize;
  j["weighted"] = !weights_path.empty();
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["objective"] = fit.objective;
  j["label_mapping"] = table.label_mapping;
  j["n"] = X.rows();
  j["p"] = X.cols();
  j["loss_scaling"] = "mean loss: squared error uses 1/(2n), logistic uses 1/n";
  srdo::atomic_write_file(out_path, j.dump(2) + "\n");
  std::cout << "fit " << method << ": intercept " << out_coef.intercept << ", objective "
            << fit.objective << (fit.converged ? "" : " (did not converge)") << "\n";
  return fit.converged ? 0 : 2;
}

int cmd_evaluate(const std::string& model_path, const std::vector<std::string>& data_paths,
                 const std::string& metric, const std::string& target,
                 const std::string& out_path) {
  std::ifstream in(model_path);
  if (!in) throw srdo::Error("cannot open model file: " + model_path);
  srdo::Json mj = srdo::Json::parse(in);
  const srdo::Coefficients model =
      srdo::coefficients_from_json(mj.contains("model") ? mj["model"] : mj);

  srdo::MetricKind kind;
  if (metric == "rmse") kind = srdo::MetricKind::rmse;
  else if (metric == "auc") kind = srdo::MetricKind::auc;
  else throw UsageError("unknown metric: " + metric);

  const srdo::Task task = kind == srdo::MetricKind::auc ? srdo::Task::binary : srdo::Task::regression;
  std::vector<srdo::LabeledDataset> suite;
  for (const std::string& path : data_paths) {
    const srdo::RawTable table = srdo::load_csv(path, target, "", task);
    srdo::LabeledDataset env;
    env.X = table_features(table);
    env.y = srdo::ResponseVector{table.target, task};
    env.environment_tag = fs::path(path).filename().string();
    suite.push_back(std::move(env));
  }
  const srdo::EvaluationReport report = srdo::evaluate_suite(model, suite, kind);

  srdo::Json j = srdo::to_json(report);
  j["version"] = srdo::version;
  j["model_file"] = model_path;
  srdo::atomic_write_file(out_path, j.dump(2) + "\n");
  for (const auto& [tag, value] : report.per_environment)
    std::cout << tag << ": " << value << "\n";
  std::cout << "mean " << report.mean_metric << " std " << report.std_metric << "\n";
  return 0;
}

int cmd_experiment(const std::string& config_path, std::optional<int> jobs,
                   const std::string& out_dir) {
  srdo::ExperimentConfig config = srdo::load_experiment_config(config_path);
  if (jobs) config.jobs = *jobs;
  if (!out_dir.empty()) config.output_dir = out_dir;

  const srdo::ExperimentResult result = srdo::run_experiment(config);
  const fs::path dir(config.output_dir);

  srdo::atomic_write_file(dir / "report.json",
                          srdo::to_json(result, config).dump(2) + "\n");
  srdo::atomic_write_file(dir / "runs.csv", srdo::runs_csv(result));
  {
    std::ifstream src(config_path, std::ios::binary);
    std::ostringstream copy;
    copy << src.rdbuf();
    srdo::atomic_write_file(dir / "config.ini", copy.str());
  }
  for (std::size_t rep = 0; rep < result.srdo_weights_per_repetition.size(); ++rep) {
    const srdo::Vector& w = result.srdo_weights_per_repetition[rep];
    if (w.size() == 0) continue;
    char name[48];
    std::snprintf(name, sizeof(name), "weights/rep_%03zu.csv", rep);
    srdo::atomic_write_file(dir / name, srdo::weights_csv(w));
  }

  for (const srdo::MethodSummary& m : result.methods) {
    std::cout << m.name << ": ";
    if (m.mean_beta_error) std::cout << "beta_error " << *m.mean_beta_error << ", ";
    std::cout << srdo::metric_name(result.metric_kind) << " mean " << m.headline.mean_metric
              << " std " << m.headline.std_metric;
    if (m.failures > 0) std::cout << " (" << m.failures << " failed runs)";
    std::cout << "\n";
  }
  std::cout << "report written to " << (dir / "report.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stable linear models via sample-reweighted decorrelation"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic environments");
  std::string sim_config, sim_out = ".";
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("--config", sim_config, "Config file with [simulation]")->required();
  simulate->add_option("--seed", sim_seed, "Override the config seed");
  simulate->add_option("--out", sim_out, "Output directory");

  // reweight
  auto* reweight = app.add_subcommand("reweight", "Learn decorrelating sample weights");
  std::string rw_data, rw_config, rw_target = "y", rw_out = ".";
  reweight->add_option("--data", rw_data, "Dataset CSV")->required();
  reweight->add_option("--config", rw_config, "Config file with [srdo] settings");
  reweight->add_option("--target", rw_target, "Target column to exclude (default y)");
  reweight->add_option("--out", rw_out, "Output directory");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a (weighted) linear model");
  std::string fit_data, fit_weights, fit_method = "ols", fit_target = "y",
              fit_out = "model.json";
  double fit_l1 = 0.0, fit_l2 = 0.0;
  bool fit_raw = false;
  fit->add_option("--data", fit_data, "Dataset CSV")->required();
  fit->add_option("--weights", fit_weights, "Weights CSV (single 'weight' column)");
  fit->add_option("--method", fit_method, "ols|lasso|elastic_net|ulasso|iilasso|logistic");
  fit->add_option("--lambda1", fit_l1, "l1 penalty");
  fit->add_option("--lambda2", fit_l2, "quadratic penalty");
  fit->add_option("--target", fit_target, "Target column (default y)");
  fit->add_flag("--no-standardize", fit_raw, "Fit on raw columns");
  fit->add_option("--out", fit_out, "Output JSON path");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a model across environments");
  std::string ev_model, ev_metric = "rmse", ev_target = "y", ev_out = "evaluation.json";
  std::vector<std::string> ev_data;
  evaluate->add_option("--model", ev_model, "Model JSON from 'fit'")->required();
  evaluate->add_option("--data", ev_data, "Environment CSVs (repeatable)")->required();
  evaluate->add_option("--metric", ev_metric, "rmse|auc");
  evaluate->add_option("--target", ev_target, "Target column (default y)");
  evaluate->add_option("--out", ev_out, "Output JSON path");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Run the full repetition protocol");
  std::string ex_config, ex_out;
  std::optional<int> ex_jobs;
  experiment->add_option("--config", ex_config, "Experiment config file")->required();
  experiment->add_option("--jobs", ex_jobs, "Parallel repetitions");
  experiment->add_option("--out", ex_out, "Output directory (overrides config)");

  auto* version_cmd = app.add_subcommand("version", "Print the library version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 1;
  }

  try {
    if (version_cmd->parsed()) {
      std::cout << "srdo " << srdo::version << "\n";
      return 0;
    }
    if (simulate->parsed()) return cmd_simulate(sim_config, sim_seed, sim_out);
    if (reweight->parsed()) return cmd_reweight(rw_data, rw_config, rw_target, rw_out);
    if (fit->parsed())
      return cmd_fit(fit_data, fit_weights, fit_method, fit_l1, fit_l2, fit_target, fit_raw,
                     fit_out);
    if (evaluate->parsed()) return cmd_evaluate(ev_model, ev_data, ev_metric, ev_target, ev_out);
    if (experiment->parsed()) return cmd_experiment(ex_config, ex_jobs, ex_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const srdo::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
