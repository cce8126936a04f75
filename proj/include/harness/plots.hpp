// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Aggregation of per-run metrics into summary tables and bar charts.

#pragma once

#include <string>
#include <vector>

#include "harness/metrics.hpp"

namespace harness {

struct AggregateRow {
  std::string method;
  std::string split;
  std::string metric;
  std::size_t n = 0;   // number of runs
  double mean = 0.0;
  double std_dev = 0.0;  // sample std; 0 for a single run
};

/// Final-epoch value per (run_id, seed, method, split, metric), then
/// mean +- sample std across runs.
std::vector<AggregateRow> aggregate_metrics(const std::vector<MetricsRecord>& records);

struct PlotOutputs {
  std::size_t runs_found = 0;
  std::vector<std::string> files;  // summary csv + one chart per metric
};

/// Reads every metrics.csv under metrics_dir (recursively), writes
/// summary.csv and one bar chart per metric (methods on the x axis, one bar
/// per split, error bars from the sample std) into out_dir.
/// Throws when no metrics.csv is found.
PlotOutputs emit_plots(const std::string& metrics_dir, const std::string& out_dir);

}  // namespace harness
