// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Grayscale PFM ("Pf") disparity maps: negative scale = little-endian
// payload, bottom-up row order, bit-exact round trip for 32-bit floats.

#pragma once

#include <string>

#include "diffnet/tensor.hpp"

namespace harness {

/// map: [H, W] float32. scale's sign encodes endianness; this writer always
/// emits little-endian (scale < 0).
void write_pfm(const std::string& path, const diffnet::Tensor<float>& map, float scale = -1.0f);

diffnet::Tensor<float> read_pfm(const std::string& path);

}  // namespace harness
