// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal RGB8 PNG writer (zlib-deflated, single IDAT) plus a disparity
// colormap helper.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "diffnet/tensor.hpp"

namespace harness {

/// rgb: row-major, 3 bytes per pixel, size = 3 * width * height.
void write_png_rgb8(const std::string& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb);

/// Blue-to-red gradient over t in [0, 1].
std::array<std::uint8_t, 3> heat_color(double t);

/// Renders a [H, W] disparity map to a colormapped PNG; values are scaled by
/// vmax (<= 0 picks the map's own maximum).
void write_disparity_png(const std::string& path, const diffnet::Tensor<float>& map,
                         float vmax = -1.0f);

}  // namespace harness
