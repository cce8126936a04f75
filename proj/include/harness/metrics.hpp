// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared metrics schema: one observation per row, append-only within a run,
// byte-stable CSV serialization.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace harness {

struct MetricsRecord {
  std::string run_id;
  std::string method;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

inline constexpr const char* kMetricsCsvHeader = "run_id,method,seed,epoch,split,metric,value";

/// Shortest round-trip decimal form; keeps reruns byte-identical.
std::string format_value(double v);

class MetricsLog {
 public:
  /// Rejects non-finite values.
  void append(MetricsRecord record);
  const std::vector<MetricsRecord>& records() const { return records_; }

  std::string to_csv() const;
  void write_csv(const std::string& path) const;

 private:
  std::vector<MetricsRecord> records_;
};

std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

}  // namespace harness
