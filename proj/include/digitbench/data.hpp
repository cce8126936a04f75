// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Digit-recognition data: IDX ingestion (MNIST format), a deterministic
// procedural glyph corpus used when no IDX files are available, and the
// color-patch target-domain synthesis.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "diffnet/tensor.hpp"

namespace digitbench {

using diffnet::Tensor;

struct LabeledImageSet {
  Tensor<float> images;  // [n, c, 28, 28], values in [0, 1]; c = 1 source, 3 target
  std::vector<std::uint8_t> labels;
  std::string split;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  /// FNV-1a over shape, pixel bytes and labels; used by the data-access log.
  std::uint64_t content_hash() const;
};

// IDX format (big-endian): magic 0x00000803 + dims n,rows,cols + pixel bytes
// for images; magic 0x00000801 + dim n + label bytes for labels. Pixels are
// scaled to [0, 1] on load.
Tensor<float> load_idx_images(const std::string& path);
std::vector<std::uint8_t> load_idx_labels(const std::string& path);
void save_idx_images(const std::string& path, const Tensor<float>& images);
void save_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

/// One procedural 1x28x28 glyph: a 5x7 digit bitmap pushed through a random
/// affine jitter (rotation, anisotropic scale, shear, translation) with a
/// stroke-weight gamma, supersampled. White digit on black, like the IDX
/// source corpus.
Tensor<float> render_glyph(int digit, std::uint64_t seed);

/// n glyphs with uniformly drawn labels.
LabeledImageSet make_glyph_set(std::size_t n, std::uint64_t seed, const std::string& split);

/// Low-frequency color noise patch [3, 28, 28]: a coarse random grid,
/// bilinearly interpolated.
Tensor<float> make_patch(std::uint64_t seed);

/// Target-domain construction: out[c] = |patch[c] - digit| for one 1x28x28
/// digit and one 3x28x28 patch.
Tensor<float> synth_mnistm(const Tensor<float>& digit, const Tensor<float>& patch);

/// Applies synth_mnistm to every image of a 1-channel set, patches keyed by
/// (seed, image index). Deterministic per (digit index, seed).
LabeledImageSet synth_mnistm_set(const LabeledImageSet& source, std::uint64_t seed,
                                 const std::string& split);

struct Normalization {
  std::array<float, 3> mean{0.f, 0.f, 0.f};
  std::array<float, 3> std{1.f, 1.f, 1.f};
};

/// Per-channel standardization statistics from a (source) set.
Normalization compute_normalization(const LabeledImageSet& set);

/// [B, 3, 28, 28] normalized batch for the given indices; 1-channel images
/// are replicated across channels so source and target share a signature.
Tensor<float> make_batch(const LabeledImageSet& set, const std::vector<std::size_t>& indices,
                         std::size_t begin, std::size_t count, const Normalization& norm);

struct DigitData {
  LabeledImageSet train;       // source domain only
  LabeledImageSet source_val;  // held-out source
  LabeledImageSet target;      // synthesized target domain
  Normalization norm;          // from train only
};

/// data_dir empty: procedural corpus. Otherwise loads the MNIST IDX files
/// (train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-...) from the
/// directory; the target domain is synthesized from held-out test digits in
/// both cases.
DigitData make_digit_data(std::size_t n_train, std::size_t n_eval, std::uint64_t seed,
                          const std::string& data_dir);

}  // namespace digitbench
