// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded RNG helpers. Every stochastic routine takes an explicit seed and
// derives sub-seeds with splitmix so parallel shards stay reproducible.

#pragma once

#include <cstdint>
#include <random>

#include "diffnet/tensor.hpp"

namespace diffnet {

/// splitmix64 step; used to derive independent stream seeds from (seed, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, T lo, T hi) {
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
}

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, T mean, T stddev) {
  std::normal_distribution<double> dist(static_cast<double>(mean), static_cast<double>(stddev));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
}

/// Random +-1 entries (Hutchinson sign probes).
template <typename T>
void fill_rademacher(Tensor<T>& t, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = coin(rng) ? T{1} : T{-1};
}

}  // namespace diffnet
