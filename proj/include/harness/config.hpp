// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat `key = value` experiment configuration with a closed key registry:
// unknown keys, duplicates and bad values are line-precise errors, and
// serialize(parse(text)) is canonical.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace harness {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

using ConfigValue = std::variant<std::int64_t, double, bool, std::string>;

enum class ConfigType { kInt, kReal, kBool, kString, kChoice };

struct KeySpec {
  std::string name;
  ConfigType type;
  ConfigValue default_value;
  std::vector<std::string> choices;  // for kChoice
};

/// The closed set of recognized keys with their defaults.
const std::vector<KeySpec>& config_registry();

class ExperimentConfig {
 public:
  /// All defaults (lambda = 0.1, epsilon = 0.5, ...).
  ExperimentConfig();

  std::int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_str(const std::string& key) const;

  /// Parses and type-checks a single value; throws ConfigError on unknown
  /// key or unparsable value.
  void set(const std::string& key, const std::string& value_text, int line = 0);

  /// Canonical text form: every key in registry order.
  std::string serialize() const;

  bool operator==(const ExperimentConfig& other) const { return values_ == other.values_; }

 private:
  const ConfigValue& lookup(const std::string& key, ConfigType want) const;
  std::map<std::string, ConfigValue> values_;
};

/// One `key = value` per line, '#' comments, blank lines ignored.
/// Unknown key, unparsable value and duplicate key are distinct diagnostics
/// naming the line.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

}  // namespace harness
