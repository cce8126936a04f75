// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/plots.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "harness/png.hpp"

namespace fs = std::filesystem;

namespace harness {

namespace {

// 5x7 bitmap glyphs, one 5-bit row per byte, MSB on the left.
const std::uint8_t* glyph(char c) {
  static const std::map<char, std::array<std::uint8_t, 7>> font = {
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
      {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
  };
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  const auto it = font.find(u);
  return it == font.end() ? font.at(' ').data() : it->second.data();
}

struct Canvas {
  std::size_t w, h;
  std::vector<std::uint8_t> rgb;

  Canvas(std::size_t width, std::size_t height) : w(width), h(height), rgb(3 * width * height, 255) {}

  void pixel(std::size_t x, std::size_t y, const std::array<std::uint8_t, 3>& c) {
    if (x >= w || y >= h) return;
    std::uint8_t* p = rgb.data() + 3 * (y * w + x);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void fill_rect(long x0, long y0, long x1, long y1, const std::array<std::uint8_t, 3>& c) {
    for (long y = std::max(0L, y0); y < std::min<long>(static_cast<long>(h), y1); ++y)
      for (long x = std::max(0L, x0); x < std::min<long>(static_cast<long>(w), x1); ++x)
        pixel(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
  }

  void text(long x, long y, const std::string& s, const std::array<std::uint8_t, 3>& c) {
    long cx = x;
    for (char ch : s) {
      const std::uint8_t* rows = glyph(ch);
      for (int ry = 0; ry < 7; ++ry)
        for (int rx = 0; rx < 5; ++rx)
          if (rows[ry] & (0x10 >> rx)) pixel(static_cast<std::size_t>(cx + rx), static_cast<std::size_t>(y + ry), c);
      cx += 6;
    }
  }
};

const std::array<std::uint8_t, 3> kBlack = {20, 20, 20};
const std::array<std::uint8_t, 3> kGray = {190, 190, 190};

std::array<std::uint8_t, 3> series_color(std::size_t i) {
  static const std::array<std::uint8_t, 3> palette[] = {
      {66, 133, 244}, {219, 68, 55}, {244, 180, 0}, {15, 157, 88}, {171, 71, 188}, {0, 172, 193}};
  return palette[i % 6];
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void draw_bar_chart(const std::string& path, const std::string& title,
                    const std::vector<std::string>& groups, const std::vector<std::string>& series,
                    const std::vector<std::vector<double>>& mean,
                    const std::vector<std::vector<double>>& dev) {
  const std::size_t width = 640, height = 400;
  const long left = 70, right = 20, top = 50, bottom = 60;
  Canvas canvas(width, height);

  double vmax = 1e-9, vmin = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t s = 0; s < series.size(); ++s) {
      vmax = std::max(vmax, mean[g][s] + dev[g][s]);
      vmin = std::min(vmin, mean[g][s] - dev[g][s]);
    }
  vmax *= 1.08;
  if (vmin < 0) vmin *= 1.08;

  const long plot_w = static_cast<long>(width) - left - right;
  const long plot_h = static_cast<long>(height) - top - bottom;
  auto y_of = [&](double v) {
    return top + static_cast<long>((vmax - v) / (vmax - vmin) * plot_h);
  };

  canvas.text(left, 14, title, kBlack);
  // Legend.
  long lx = left;
  for (std::size_t s = 0; s < series.size(); ++s) {
    canvas.fill_rect(lx, 30, lx + 10, 40, series_color(s));
    canvas.text(lx + 14, 31, series[s], kBlack);
    lx += 14 + 6 * static_cast<long>(series[s].size()) + 16;
  }
  // Gridlines and y labels.
  for (int tick = 0; tick <= 5; ++tick) {
    const double v = vmin + (vmax - vmin) * tick / 5.0;
    const long y = y_of(v);
    canvas.fill_rect(left, y, left + plot_w, y + 1, kGray);
    canvas.text(4, y - 3, short_num(v), kBlack);
  }
  // Axes.
  canvas.fill_rect(left - 1, top, left, top + plot_h + 1, kBlack);
  canvas.fill_rect(left - 1, y_of(0.0), left + plot_w, y_of(0.0) + 1, kBlack);

  const long group_w = plot_w / static_cast<long>(std::max<std::size_t>(1, groups.size()));
  const long bar_w =
      std::max(4L, (group_w - 16) / static_cast<long>(std::max<std::size_t>(1, series.size())));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const long gx = left + static_cast<long>(g) * group_w + 8;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const long x0 = gx + static_cast<long>(s) * bar_w;
      const double v = mean[g][s];
      const long y_base = y_of(0.0), y_val = y_of(v);
      canvas.fill_rect(x0, std::min(y_base, y_val), x0 + bar_w - 2, std::max(y_base, y_val),
                       series_color(s));
      // Error bar.
      const double e = dev[g][s];
      if (e > 0) {
        const long cx = x0 + bar_w / 2 - 1;
        canvas.fill_rect(cx, y_of(v + e), cx + 1, y_of(v - e), kBlack);
        canvas.fill_rect(cx - 3, y_of(v + e), cx + 4, y_of(v + e) + 1, kBlack);
        canvas.fill_rect(cx - 3, y_of(v - e), cx + 4, y_of(v - e) + 1, kBlack);
      }
    }
    canvas.text(gx, top + plot_h + 8, groups[g], kBlack);
  }
  write_png_rgb8(path, width, height, canvas.rgb);
}

}  // namespace

std::vector<AggregateRow> aggregate_metrics(const std::vector<MetricsRecord>& records) {
  // Final epoch per (run_id, seed, method, split, metric).
  std::map<std::tuple<std::string, std::uint64_t, std::string, std::string, std::string>,
           std::pair<std::int64_t, double>>
      finals;
  for (const MetricsRecord& r : records) {
    const auto key = std::make_tuple(r.run_id, r.seed, r.method, r.split, r.metric);
    auto it = finals.find(key);
    if (it == finals.end() || r.epoch >= it->second.first) finals[key] = {r.epoch, r.value};
  }
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const auto& [key, val] : finals) {
    groups[std::make_tuple(std::get<2>(key), std::get<3>(key), std::get<4>(key))].push_back(val.second);
  }
  std::vector<AggregateRow> rows;
  for (const auto& [key, vals] : groups) {
    AggregateRow row;
    row.method = std::get<0>(key);
    row.split = std::get<1>(key);
    row.metric = std::get<2>(key);
    row.n = vals.size();
    double sum = 0;
    for (double v : vals) sum += v;
    row.mean = sum / static_cast<double>(vals.size());
    if (vals.size() > 1) {
      double ss = 0;
      for (double v : vals) ss += (v - row.mean) * (v - row.mean);
      row.std_dev = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

PlotOutputs emit_plots(const std::string& metrics_dir, const std::string& out_dir) {
  std::vector<MetricsRecord> all;
  std::size_t runs = 0;
  if (fs::exists(metrics_dir)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(metrics_dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& p : files) {
      const auto records = read_metrics_csv(p.string());
      all.insert(all.end(), records.begin(), records.end());
      ++runs;
    }
  }
  if (all.empty()) {
    throw std::runtime_error("emit_plots: no metrics.csv rows found under '" + metrics_dir + "'");
  }

  fs::create_directories(out_dir);
  PlotOutputs outputs;
  outputs.runs_found = runs;

  const std::vector<AggregateRow> rows = aggregate_metrics(all);
  {
    const std::string path = (fs::path(out_dir) / "summary.csv").string();
    std::ofstream out(path, std::ios::binary);
    out << "method,split,metric,n,mean,std\n";
    for (const AggregateRow& r : rows) {
      out << r.method << "," << r.split << "," << r.metric << "," << r.n << ","
          << format_value(r.mean) << "," << format_value(r.std_dev) << "\n";
    }
    outputs.files.push_back(path);
  }

  std::set<std::string> metrics;
  for (const AggregateRow& r : rows) metrics.insert(r.metric);
  for (const std::string& metric : metrics) {
    std::set<std::string> method_set, split_set;
    for (const AggregateRow& r : rows)
      if (r.metric == metric) {
        method_set.insert(r.method);
        split_set.insert(r.split);
      }
    const std::vector<std::string> methods(method_set.begin(), method_set.end());
    const std::vector<std::string> splits(split_set.begin(), split_set.end());
    std::vector<std::vector<double>> mean(methods.size(), std::vector<double>(splits.size(), 0.0));
    std::vector<std::vector<double>> dev(methods.size(), std::vector<double>(splits.size(), 0.0));
    for (const AggregateRow& r : rows) {
      if (r.metric != metric) continue;
      const auto m = std::distance(methods.begin(), std::find(methods.begin(), methods.end(), r.method));
      const auto s = std::distance(splits.begin(), std::find(splits.begin(), splits.end(), r.split));
      mean[m][s] = r.mean;
      dev[m][s] = r.std_dev;
    }
    const std::string path = (fs::path(out_dir) / ("chart_" + sanitize(metric) + ".png")).string();
    draw_bar_chart(path, metric + " by method", methods, splits, mean, dev);
    outputs.files.push_back(path);
  }
  return outputs;
}

}  // namespace harness
