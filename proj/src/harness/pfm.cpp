// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/pfm.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace harness {

namespace {

static_assert(std::endian::native == std::endian::little,
              "pfm io assumes a little-endian host");

}  // namespace

void write_pfm(const std::string& path, const diffnet::Tensor<float>& map, float scale) {
  if (map.rank() != 2) throw std::invalid_argument("pfm: expected a [H, W] map");
  if (scale >= 0.0f) throw std::invalid_argument("pfm: this writer emits little-endian (scale < 0)");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pfm: cannot write '" + path + "'");
  const std::size_t h = map.dim(0), w = map.dim(1);
  out << "Pf\n" << w << " " << h << "\n" << scale << "\n";
  // Bottom-up row order.
  for (std::size_t row = h; row-- > 0;) {
    out.write(reinterpret_cast<const char*>(map.data() + row * w),
              static_cast<std::streamsize>(w * sizeof(float)));
  }
}

diffnet::Tensor<float> read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pfm: cannot read '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "Pf") throw std::runtime_error("pfm: '" + path + "' is not a grayscale Pf file");
  std::size_t w = 0, h = 0;
  float scale = 0.0f;
  in >> w >> h >> scale;
  in.get();  // single whitespace after the header
  if (!in || w == 0 || h == 0) throw std::runtime_error("pfm: bad header in '" + path + "'");
  diffnet::Tensor<float> map({h, w});
  for (std::size_t row = h; row-- > 0;) {
    in.read(reinterpret_cast<char*>(map.data() + row * w),
            static_cast<std::streamsize>(w * sizeof(float)));
  }
  if (!in) throw std::runtime_error("pfm: truncated payload in '" + path + "'");
  if (scale > 0.0f) {
    // Big-endian payload: byte-swap each float.
    for (std::size_t i = 0; i < map.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, map.data() + i, 4);
      bits = __builtin_bswap32(bits);
      std::memcpy(map.data() + i, &bits, 4);
    }
  }
  return map;
}

}  // namespace harness
