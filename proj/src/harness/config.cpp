// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

const std::vector<KeySpec>& config_registry() {
  static const std::vector<KeySpec> registry = {
      {"run.id", ConfigType::kString, std::string("run"), {}},
      {"run.out_dir", ConfigType::kString, std::string("out"), {}},

      {"digit.method", ConfigType::kChoice, std::string("erm"), {"erm", "ib", "rib", "itsa"}},
      {"digit.seed", ConfigType::kInt, std::int64_t{1}, {}},
      {"digit.epochs", ConfigType::kInt, std::int64_t{3}, {}},
      {"digit.batch_size", ConfigType::kInt, std::int64_t{64}, {}},
      {"digit.lr", ConfigType::kReal, 1e-3, {}},
      {"digit.train_subset", ConfigType::kInt, std::int64_t{8000}, {}},
      {"digit.eval_subset", ConfigType::kInt, std::int64_t{2000}, {}},
      {"digit.latent_dim", ConfigType::kInt, std::int64_t{32}, {}},
      {"digit.data_dir", ConfigType::kString, std::string(""), {}},

      {"itsa.epsilon", ConfigType::kReal, 0.5, {}},
      {"itsa.lambda", ConfigType::kReal, 0.1, {}},
      {"itsa.grad_norm_floor", ConfigType::kReal, 1e-12, {}},
      {"itsa.reduction", ConfigType::kChoice, std::string("mean"), {"mean", "sum"}},
      {"itsa.perturbed_task_branch", ConfigType::kBool, false, {}},

      {"ib.beta", ConfigType::kReal, 1e-3, {}},
      {"rib.beta_fisher", ConfigType::kReal, 1e-3, {}},
      {"rib.n_probes", ConfigType::kInt, std::int64_t{1}, {}},
      {"rib.sigma", ConfigType::kReal, 1.0, {}},

      {"fisher.seed", ConfigType::kInt, std::int64_t{1}, {}},
      {"fisher.n_samples", ConfigType::kInt, std::int64_t{100000}, {}},
      {"fisher.n_probes", ConfigType::kInt, std::int64_t{10000}, {}},

      {"scene.height", ConfigType::kInt, std::int64_t{64}, {}},
      {"scene.width", ConfigType::kInt, std::int64_t{128}, {}},
      {"scene.max_disparity", ConfigType::kInt, std::int64_t{32}, {}},
      {"scene.layers_min", ConfigType::kInt, std::int64_t{3}, {}},
      {"scene.layers_max", ConfigType::kInt, std::int64_t{6}, {}},

      {"stereo.method", ConfigType::kChoice, std::string("baseline"), {"baseline", "scp_only", "itsa"}},
      {"stereo.seed", ConfigType::kInt, std::int64_t{1}, {}},
      {"stereo.epochs", ConfigType::kInt, std::int64_t{10}, {}},
      {"stereo.batch_size", ConfigType::kInt, std::int64_t{2}, {}},
      {"stereo.lr", ConfigType::kReal, 1e-3, {}},
      {"stereo.train_scenes", ConfigType::kInt, std::int64_t{2000}, {}},
      {"stereo.eval_scenes", ConfigType::kInt, std::int64_t{64}, {}},

      {"eval.d1_threshold", ConfigType::kReal, 3.0, {}},
      {"eval.scp_epsilon", ConfigType::kReal, 0.5, {}},
  };
  return registry;
}

namespace {

const KeySpec* find_spec(const std::string& key) {
  for (const KeySpec& spec : config_registry())
    if (spec.name == key) return &spec;
  return nullptr;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const KeySpec& spec : config_registry()) values_[spec.name] = spec.default_value;
}

const ConfigValue& ExperimentConfig::lookup(const std::string& key, ConfigType want) const {
  const KeySpec* spec = find_spec(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  const bool ok = (want == ConfigType::kInt && spec->type == ConfigType::kInt) ||
                  (want == ConfigType::kReal && spec->type == ConfigType::kReal) ||
                  (want == ConfigType::kBool && spec->type == ConfigType::kBool) ||
                  (want == ConfigType::kString &&
                   (spec->type == ConfigType::kString || spec->type == ConfigType::kChoice));
  if (!ok) throw ConfigError("key '" + key + "' accessed with the wrong type");
  return values_.at(key);
}

std::int64_t ExperimentConfig::get_int(const std::string& key) const {
  return std::get<std::int64_t>(lookup(key, ConfigType::kInt));
}

double ExperimentConfig::get_real(const std::string& key) const {
  return std::get<double>(lookup(key, ConfigType::kReal));
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  return std::get<bool>(lookup(key, ConfigType::kBool));
}

const std::string& ExperimentConfig::get_str(const std::string& key) const {
  return std::get<std::string>(lookup(key, ConfigType::kString));
}

void ExperimentConfig::set(const std::string& key, const std::string& value_text, int line) {
  const KeySpec* spec = find_spec(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'", line);
  const std::string v = trim(value_text);
  switch (spec->type) {
    case ConfigType::kInt: {
      std::int64_t out{};
      auto res = std::from_chars(v.data(), v.data() + v.size(), out);
      if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("unparsable integer '" + v + "' for key '" + key + "'", line);
      values_[key] = out;
      break;
    }
    case ConfigType::kReal: {
      double out{};
      auto res = std::from_chars(v.data(), v.data() + v.size(), out);
      if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("unparsable real '" + v + "' for key '" + key + "'", line);
      values_[key] = out;
      break;
    }
    case ConfigType::kBool: {
      if (v == "true")
        values_[key] = true;
      else if (v == "false")
        values_[key] = false;
      else
        throw ConfigError("unparsable bool '" + v + "' for key '" + key + "' (use true/false)", line);
      break;
    }
    case ConfigType::kString:
      values_[key] = v;
      break;
    case ConfigType::kChoice: {
      if (std::find(spec->choices.begin(), spec->choices.end(), v) == spec->choices.end()) {
        std::string allowed;
        for (const std::string& c : spec->choices) allowed += (allowed.empty() ? "" : "|") + c;
        throw ConfigError("invalid value '" + v + "' for key '" + key + "' (one of " + allowed + ")",
                          line);
      }
      values_[key] = v;
      break;
    }
  }
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  for (const KeySpec& spec : config_registry()) {
    const ConfigValue& v = values_.at(spec.name);
    os << spec.name << " = ";
    switch (spec.type) {
      case ConfigType::kInt: os << std::get<std::int64_t>(v); break;
      case ConfigType::kReal: os << format_real(std::get<double>(v)); break;
      case ConfigType::kBool: os << (std::get<bool>(v) ? "true" : "false"); break;
      case ConfigType::kString:
      case ConfigType::kChoice: os << std::get<std::string>(v); break;
    }
    os << "\n";
  }
  return os.str();
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  std::vector<std::string> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value', got '" + trim(raw) + "'", line_no);
    const std::string key = trim(line.substr(0, eq));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigError("duplicate key '" + key + "'", line_no);
    cfg.set(key, line.substr(eq + 1), line_no);
    seen.push_back(key);
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace harness
