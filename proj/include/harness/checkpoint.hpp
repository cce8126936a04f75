// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary checkpoint: named parameter arrays with shape headers.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "diffnet/tensor.hpp"

namespace harness {

struct Checkpoint {
  std::map<std::string, diffnet::Tensor<float>> f32;
  std::map<std::string, diffnet::Tensor<double>> f64;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace harness
