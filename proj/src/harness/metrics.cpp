// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace harness {

std::string format_value(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void MetricsLog::append(MetricsRecord record) {
  if (!std::isfinite(record.value)) {
    throw std::runtime_error("metrics: non-finite value for metric '" + record.metric + "' (run " +
                             record.run_id + ", epoch " + std::to_string(record.epoch) + ")");
  }
  records_.push_back(std::move(record));
}

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os << kMetricsCsvHeader << "\n";
  for (const MetricsRecord& r : records_) {
    os << r.run_id << "," << r.method << "," << r.seed << "," << r.epoch << "," << r.split << ","
       << r.metric << "," << format_value(r.value) << "\n";
  }
  return os.str();
}

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("metrics: cannot write '" + path + "'");
  out << to_csv();
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics: cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader) {
    throw std::runtime_error("metrics: '" + path + "' does not start with the expected header");
  }
  std::vector<MetricsRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    for (int c = 0; c < 6; ++c) {
      const auto comma = line.find(',', pos);
      if (comma == std::string::npos) {
        throw std::runtime_error("metrics: '" + path + "' line " + std::to_string(line_no) +
                                 ": expected 7 columns");
      }
      cells.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    cells.push_back(line.substr(pos));
    MetricsRecord r;
    r.run_id = cells[0];
    r.method = cells[1];
    r.seed = std::stoull(cells[2]);
    r.epoch = std::stoll(cells[3]);
    r.split = cells[4];
    r.metric = cells[5];
    double v{};
    auto res = std::from_chars(cells[6].data(), cells[6].data() + cells[6].size(), v);
    if (res.ec != std::errc{})
      throw std::runtime_error("metrics: '" + path + "' line " + std::to_string(line_no) +
                               ": bad value '" + cells[6] + "'");
    r.value = v;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace harness
