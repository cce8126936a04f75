// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace harness {

namespace {

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> buf;
  push_u32(buf, static_cast<std::uint32_t>(payload.size()));
  buf.insert(buf.end(), type, type + 4);
  buf.insert(buf.end(), payload.begin(), payload.end());
  const auto crc = crc32(0, buf.data() + 4, static_cast<uInt>(buf.size() - 4));
  push_u32(buf, static_cast<std::uint32_t>(crc));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void write_png_rgb8(const std::string& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != 3 * width * height) throw std::invalid_argument("png: pixel buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("png: cannot write '" + path + "'");

  static const std::uint8_t signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(signature), 8);

  std::vector<std::uint8_t> ihdr;
  push_u32(ihdr, static_cast<std::uint32_t>(width));
  push_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(out, "IHDR", ihdr);

  // Filter byte 0 per scanline.
  std::vector<std::uint8_t> raw((3 * width + 1) * height);
  for (std::size_t y = 0; y < height; ++y) {
    raw[y * (3 * width + 1)] = 0;
    std::memcpy(raw.data() + y * (3 * width + 1) + 1, rgb.data() + y * 3 * width, 3 * width);
  }
  uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_size);
  if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("png: deflate failed for '" + path + "'");
  }
  comp.resize(comp_size);
  write_chunk(out, "IDAT", comp);
  write_chunk(out, "IEND", {});
}

std::array<std::uint8_t, 3> heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  // Piecewise gradient: dark blue -> cyan -> green -> yellow -> red.
  static const double stops[5][3] = {
      {0.05, 0.05, 0.4}, {0.0, 0.7, 0.9}, {0.1, 0.75, 0.2}, {0.95, 0.9, 0.1}, {0.85, 0.1, 0.05}};
  const double pos = t * 4.0;
  const int lo = std::min(3, static_cast<int>(pos));
  const double f = pos - lo;
  std::array<std::uint8_t, 3> c;
  for (int k = 0; k < 3; ++k) {
    const double v = stops[lo][k] * (1.0 - f) + stops[lo + 1][k] * f;
    c[k] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  }
  return c;
}

void write_disparity_png(const std::string& path, const diffnet::Tensor<float>& map, float vmax) {
  if (map.rank() != 2) throw std::invalid_argument("disparity png: expected a [H, W] map");
  const std::size_t h = map.dim(0), w = map.dim(1);
  float top = vmax;
  if (top <= 0.0f) {
    top = 1e-6f;
    for (std::size_t i = 0; i < map.size(); ++i) top = std::max(top, map[i]);
  }
  std::vector<std::uint8_t> rgb(3 * w * h);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto c = heat_color(static_cast<double>(map[i]) / top);
    rgb[3 * i] = c[0];
    rgb[3 * i + 1] = c[1];
    rgb[3 * i + 2] = c[2];
  }
  write_png_rgb8(path, w, h, rgb);
}

}  // namespace harness
