#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/pipeline.hpp"

namespace nsf {

// Flat key-value run configuration with one [section] per pipeline stage:
//
//   [input]
//   synth = true          # or: data = embeddings.csv, format = csv
//   n = 4000
//   dim = 12
//   rho = 0.9
//   bias_scale = 3
//   [transform]
//   lambda = 1e-4
//   lr = 1e-3
//   steps = 2000
//   loss_form = squared
//   [classifier]
//   lr = 1e-3
//   steps = 1000
//   batch_size = 128
//   [run]
//   seeds = 0,1,2
//   out = runs/demo
//
// Unknown keys are diagnostics, not silent no-ops.
struct ConfigDiagnostics {
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

inline std::map<std::string, std::string> parse_flat_config(std::istream& in,
                                                            const std::string& path) {
  std::map<std::string, std::string> kv;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    kv[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

}  // namespace detail

// Parse a config file into a RunConfig, collecting every violated constraint
// instead of stopping at the first.
inline RunConfig parse_run_config(const std::string& path, ConfigDiagnostics& diag) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  auto kv = detail::parse_flat_config(in, path);
  RunConfig config;

  auto take = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return "";
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto parse_double = [&](const std::string& key, double& out) {
    const std::string v = take(key);
    if (v.empty()) return;
    try {
      out = std::stod(v);
    } catch (const std::exception&) {
      diag.errors.push_back(key + ": not a number: '" + v + "'");
    }
  };
  auto parse_size = [&](const std::string& key, std::size_t& out) {
    const std::string v = take(key);
    if (v.empty()) return;
    try {
      const long long parsed = std::stoll(v);
      if (parsed < 0) throw std::out_of_range("negative");
      out = static_cast<std::size_t>(parsed);
    } catch (const std::exception&) {
      diag.errors.push_back(key + ": not a non-negative integer: '" + v + "'");
    }
  };

  const std::string synth_flag = take("input.synth");
  const std::string data = take("input.data");
  if (synth_flag == "true") {
    SyntheticConfig sc;
    parse_size("input.n", sc.n);
    parse_size("input.dim", sc.dim);
    parse_double("input.rho", sc.rho);
    parse_double("input.bias_scale", sc.bias_scale);
    config.synth = sc;
  } else if (!data.empty()) {
    config.data_path = data;
    const std::string fmt = take("input.format");
    try {
      config.data_format = fmt.empty() ? format_from_path(data) : parse_dataset_format(fmt);
    } catch (const std::exception& e) {
      diag.errors.push_back(e.what());
    }
  } else {
    diag.errors.push_back("input: set 'synth = true' or 'data = <path>'");
  }

  parse_double("transform.lambda", config.transform.lambda);
  parse_double("transform.lr", config.transform.learning_rate);
  parse_size("transform.steps", config.transform.steps);
  if (const std::string lf = take("transform.loss_form"); !lf.empty()) {
    try {
      config.transform.loss_form = parse_loss_form(lf);
    } catch (const std::exception& e) {
      diag.errors.push_back(e.what());
    }
  }
  parse_double("classifier.lr", config.classifier.learning_rate);
  parse_size("classifier.steps", config.classifier.steps);
  parse_size("classifier.batch_size", config.classifier.batch_size);

  if (kv.contains("run.seeds")) {
    const std::string seeds = take("run.seeds");
    config.seeds.clear();
    std::stringstream ss(seeds);
    std::string token;
    while (std::getline(ss, token, ',')) {
      try {
        config.seeds.push_back(std::stoull(detail::trim(token)));
      } catch (const std::exception&) {
        diag.errors.push_back("run.seeds: not an integer: '" + token + "'");
      }
    }
  }
  config.out_dir = take("run.out");

  for (const auto& [key, value] : kv)
    diag.errors.push_back("unknown config key: " + key);

  // Surface structural violations as diagnostics with the field name.
  if (config.seeds.empty()) diag.errors.push_back("run.seeds: seed list must be non-empty");
  if (config.synth) {
    if (!(config.synth->rho > 0.5 && config.synth->rho < 1.0))
      diag.errors.push_back("input.rho: rho must be in (0.5, 1)");
    if (!(config.synth->bias_scale >= 1.0))
      diag.errors.push_back("input.bias_scale: must be >= 1");
    if (config.synth->dim < 3) diag.errors.push_back("input.dim: must be >= 3");
    if (config.synth->n < 1) diag.errors.push_back("input.n: must be positive");
  }
  if (config.transform.lambda < 0) diag.errors.push_back("transform.lambda: must be >= 0");
  if (!(config.transform.learning_rate > 0))
    diag.errors.push_back("transform.lr: must be positive");
  if (config.transform.steps < 1) diag.errors.push_back("transform.steps: must be >= 1");
  if (!(config.classifier.learning_rate > 0))
    diag.errors.push_back("classifier.lr: must be positive");
  if (config.classifier.steps < 1) diag.errors.push_back("classifier.steps: must be >= 1");
  if (config.classifier.batch_size < 1)
    diag.errors.push_back("classifier.batch_size: must be >= 1");
  return config;
}

}  // namespace nsf
