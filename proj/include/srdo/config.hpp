#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "srdo/experiment.hpp"

namespace srdo {

/// Sectioned key = value plain-text config. '#' and ';' start comments (whole
/// line or after whitespace); values may be scalars or space-separated lists.
struct IniFile {
  struct Entry {
    std::string value;
    std::size_t line = 0;
    mutable bool consumed = false;
  };
  // section -> key -> entry; insertion order of sections preserved separately
  std::map<std::string, std::map<std::string, Entry>> sections;
  std::vector<std::string> section_order;

  bool has_section(const std::string& name) const { return sections.count(name) > 0; }

  const Entry* find(const std::string& section, const std::string& key) const {
    const auto sit = sections.find(section);
    if (sit == sections.end()) return nullptr;
    const auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return nullptr;
    kit->second.consumed = true;
    return &kit->second;
  }
};

namespace detail {

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') quoted = !quoted;
    if (!quoted && (c == '#' || c == ';') &&
        (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1]))))
      return line.substr(0, i);
  }
  return line;
}

inline double config_double(const IniFile::Entry& e, const std::string& field) {
  double out;
  if (!parse_double(e.value, out)) throw ConfigError(e.line, field, "expected a number");
  return out;
}

inline std::int64_t config_int(const IniFile::Entry& e, const std::string& field) {
  const double d = config_double(e, field);
  const auto i = static_cast<std::int64_t>(d);
  if (static_cast<double>(i) != d) throw ConfigError(e.line, field, "expected an integer");
  return i;
}

inline bool config_bool(const IniFile::Entry& e, const std::string& field) {
  const std::string v = trim(e.value);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(e.line, field, "expected true/false");
}

inline std::vector<double> config_list(const IniFile::Entry& e, const std::string& field) {
  std::istringstream ss(e.value);
  std::vector<double> out;
  std::string token;
  while (ss >> token) {
    double v;
    if (!parse_double(token, v)) throw ConfigError(e.line, field, "expected numbers");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(e.line, field, "expected at least one number");
  return out;
}

}  // namespace detail

inline IniFile parse_ini(std::istream& in) {
  IniFile ini;
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(detail::strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(lineno, s, "unterminated section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw ConfigError(lineno, s, "empty section name");
      if (!ini.has_section(section)) ini.section_order.push_back(section);
      ini.sections[section];  // create
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, s, "expected key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(lineno, s, "empty key");
    if (section.empty()) throw ConfigError(lineno, key, "key outside any section");
    if (ini.sections[section].count(key))
      throw ConfigError(lineno, key, "duplicate key in section [" + section + "]");
    ini.sections[section][key] = IniFile::Entry{value, lineno, false};
  }
  return ini;
}

inline IniFile load_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  return parse_ini(in);
}

namespace detail {

inline void reject_unconsumed(const IniFile& ini, const std::string& section) {
  const auto it = ini.sections.find(section);
  if (it == ini.sections.end()) return;
  for (const auto& [key, entry] : it->second)
    if (!entry.consumed) throw ConfigError(entry.line, key, "unknown key");
}

inline Method method_from_name(const std::string& base, std::size_t line) {
  if (base == "ols" || base == "wls") return Method::ols;
  if (base == "lasso") return Method::lasso;
  if (base == "elastic_net") return Method::elastic_net;
  if (base == "ulasso") return Method::ulasso;
  if (base == "iilasso") return Method::iilasso;
  if (base == "logistic") return Method::logistic;
  throw ConfigError(line, base, "unknown method");
}

}  // namespace detail

/// Seed plus global run controls from [experiment]. The seed is mandatory:
/// there is no implicit entropy anywhere in the library.
struct ExperimentSectionDefaults {
  Task task = Task::regression;
  std::uint64_t seed = 0;
  int repetitions = 1;
  int jobs = 1;
  std::string output;
};

inline ExperimentSectionDefaults parse_experiment_section(const IniFile& ini) {
  ExperimentSectionDefaults out;
  if (!ini.has_section("experiment")) throw ConfigError(0, "experiment", "missing section");
  const IniFile::Entry* seed = ini.find("experiment", "seed");
  if (!seed) throw ConfigError(0, "seed", "seed is mandatory (no implicit entropy)");
  out.seed = static_cast<std::uint64_t>(detail::config_int(*seed, "seed"));
  if (const auto* e = ini.find("experiment", "task")) {
    const std::string v = detail::trim(e->value);
    if (v == "regression") out.task = Task::regression;
    else if (v == "binary" || v == "classification") out.task = Task::binary;
    else throw ConfigError(e->line, "task", "expected regression or binary");
  }
  if (const auto* e = ini.find("experiment", "repetitions"))
    out.repetitions = static_cast<int>(detail::config_int(*e, "repetitions"));
  if (const auto* e = ini.find("experiment", "jobs"))
    out.jobs = static_cast<int>(detail::config_int(*e, "jobs"));
  if (const auto* e = ini.find("experiment", "output")) out.output = detail::trim(e->value);
  detail::reject_unconsumed(ini, "experiment");
  return out;
}

inline std::pair<SimulationConfig, std::vector<double>> parse_simulation_section(
    const IniFile& ini, std::uint64_t seed) {
  if (!ini.has_section("simulation")) throw ConfigError(0, "simulation", "missing section");
  SimulationConfig cfg;
  cfg.seed = seed;

  const auto require = [&](const char* key) -> const IniFile::Entry& {
    const IniFile::Entry* e = ini.find("simulation", key);
    if (!e) throw ConfigError(0, key, "missing required key in [simulation]");
    return *e;
  };
  cfg.n = static_cast<int>(detail::config_int(require("n"), "n"));
  const int p = static_cast<int>(detail::config_int(require("p"), "p"));
  const int s = static_cast<int>(detail::config_int(require("s"), "s"));

  const IniFile::Entry& rho_e = require("rho_train");
  const std::vector<double> rhos = detail::config_list(rho_e, "rho_train");
  CovarianceSpec spec;
  spec.p = p;
  spec.s = s;
  if (rhos.size() == 1) spec = CovarianceSpec::uniform(p, s, rhos.front());
  else spec.rho_per_block = rhos;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(rho_e.line, "rho_train",
                      std::string(e.what()) +
                          " (blocks (1-rho)I + rho 11^T need rho in (-1/(s-1), 1))");
  }
  cfg.spec = spec;

  const IniFile::Entry& beta_e = require("beta");
  const std::vector<double> beta = detail::config_list(beta_e, "beta");
  if (beta.size() != static_cast<std::size_t>(p))
    throw ConfigError(beta_e.line, "beta", "expected p slope values");
  cfg.beta_true.slopes = Eigen::Map<const Vector>(beta.data(), p);
  if (const auto* e = ini.find("simulation", "intercept"))
    cfg.beta_true.intercept = detail::config_double(*e, "intercept");
  if (const auto* e = ini.find("simulation", "noise_std"))
    cfg.noise_std = detail::config_double(*e, "noise_std");
  if (const auto* e = ini.find("simulation", "bias_kind")) {
    const std::string v = detail::trim(e->value);
    if (v == "sign") cfg.bias_kind = BiasKind::eigvec_sign;
    else if (v == "linear") cfg.bias_kind = BiasKind::eigvec_linear;
    else throw ConfigError(e->line, "bias_kind", "expected sign or linear");
  }
  if (const auto* e = ini.find("simulation", "bias_scale"))
    cfg.bias_scale = detail::config_double(*e, "bias_scale");
  if (const auto* e = ini.find("simulation", "reuse_train_bias_direction"))
    cfg.reuse_train_bias_direction = detail::config_bool(*e, "reuse_train_bias_direction");

  std::vector<double> rho_tests;
  if (const auto* e = ini.find("simulation", "rho_test"))
    rho_tests = detail::config_list(*e, "rho_test");
  for (double rho : rho_tests) {
    CovarianceSpec probe = CovarianceSpec::uniform(p, s, rho);
    try {
      probe.validate();
    } catch (const Error& err) {
      throw ConfigError(ini.find("simulation", "rho_test")->line, "rho_test", err.what());
    }
  }
  detail::reject_unconsumed(ini, "simulation");
  return {cfg, rho_tests};
}

inline SrdoConfig parse_srdo_section(const IniFile& ini, std::uint64_t seed) {
  SrdoConfig cfg;
  cfg.seed = seed;
  if (!ini.has_section("srdo")) return cfg;  // all defaults
  if (const auto* e = ini.find("srdo", "clip")) {
    const std::vector<double> clip = detail::config_list(*e, "clip");
    if (clip.size() != 2) throw ConfigError(e->line, "clip", "expected 'lo hi'");
    cfg.weight_clip_lo = clip[0];
    cfg.weight_clip_hi = clip[1];
  }
  if (const auto* e = ini.find("srdo", "regularization"))
    cfg.classifier_regularization = detail::config_double(*e, "regularization");
  if (const auto* e = ini.find("srdo", "max_iterations"))
    cfg.classifier_max_iterations = static_cast<int>(detail::config_int(*e, "max_iterations"));
  if (const auto* e = ini.find("srdo", "replicas"))
    cfg.resample_replicas = static_cast<int>(detail::config_int(*e, "replicas"));
  if (const auto* e = ini.find("srdo", "quadratic"))
    cfg.quadratic_expansion = detail::config_bool(*e, "quadratic");
  if (const auto* e = ini.find("srdo", "confidence_tau"))
    cfg.confidence_tau = detail::config_double(*e, "confidence_tau");
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigError(0, "srdo", e.what());
  }
  detail::reject_unconsumed(ini, "srdo");
  return cfg;
}

inline CsvSource parse_csv_section(const IniFile& ini) {
  CsvSource src;
  const auto require = [&](const char* key) -> const IniFile::Entry& {
    const IniFile::Entry* e = ini.find("csv", key);
    if (!e) throw ConfigError(0, key, "missing required key in [csv]");
    return *e;
  };
  src.path = detail::trim(require("path").value);
  src.target_column = detail::trim(require("target").value);
  src.environment_column = detail::trim(require("environment").value);
  const IniFile::Entry& bins = require("bins");
  src.split.environment_column = src.environment_column;
  src.split.bin_edges = detail::config_list(bins, "bins");
  if (const auto* e = ini.find("csv", "train_bin"))
    src.split.train_bin_index = static_cast<int>(detail::config_int(*e, "train_bin"));
  if (const auto* e = ini.find("csv", "log_target"))
    src.log_target = detail::config_bool(*e, "log_target");
  try {
    src.split.validate();
  } catch (const Error& e) {
    throw ConfigError(bins.line, "bins", e.what());
  }
  detail::reject_unconsumed(ini, "csv");
  return src;
}

/// Full experiment config: [experiment] + exactly one of [simulation]/[csv] +
/// optional [srdo] + one or more [method.<name>] sections.
inline ExperimentConfig load_experiment_config(const IniFile& ini) {
  const ExperimentSectionDefaults exp = parse_experiment_section(ini);
  ExperimentConfig cfg;
  cfg.task = exp.task;
  cfg.seed = exp.seed;
  cfg.repetitions = exp.repetitions;
  cfg.jobs = exp.jobs;
  if (!exp.output.empty()) cfg.output_dir = exp.output;

  const bool has_sim = ini.has_section("simulation");
  const bool has_csv = ini.has_section("csv");
  if (has_sim == has_csv)
    throw ConfigError(0, "data", "exactly one of [simulation] or [csv] is required");
  if (has_sim) {
    auto [sim, rho_tests] = parse_simulation_section(ini, exp.seed);
    cfg.source = SimulationSource{std::move(sim), std::move(rho_tests)};
  } else {
    cfg.source = parse_csv_section(ini);
  }
  cfg.srdo_config = parse_srdo_section(ini, exp.seed);

  for (const std::string& section : ini.section_order) {
    if (section.rfind("method.", 0) != 0) {
      if (section != "experiment" && section != "simulation" && section != "csv" &&
          section != "srdo")
        throw ConfigError(0, section, "unknown section");
      continue;
    }
    MethodSpec spec;
    spec.name = section.substr(7);
    std::string base = spec.name;
    if (base.rfind("srdo_", 0) == 0) {
      spec.use_srdo = true;
      base = base.substr(5);
    }
    spec.method = detail::method_from_name(base, 0);
    if (const auto* e = ini.find(section, "lambda1"))
      spec.lambda1_grid = detail::config_list(*e, "lambda1");
    if (const auto* e = ini.find(section, "lambda2"))
      spec.lambda2_grid = detail::config_list(*e, "lambda2");
    if (const auto* e = ini.find(section, "folds"))
      spec.cv_folds = static_cast<int>(detail::config_int(*e, "folds"));
    detail::reject_unconsumed(ini, section);
    cfg.methods.push_back(std::move(spec));
  }
  if (cfg.methods.empty())
    throw ConfigError(0, "method", "at least one [method.<name>] section is required");

  if (cfg.task == Task::binary) {
    for (const MethodSpec& m : cfg.methods)
      if (m.method != Method::logistic)
        throw ConfigError(0, m.name, "binary task supports logistic methods only");
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  const IniFile ini = load_ini(path);
  return load_experiment_config(ini);
}

}  // namespace srdo
