// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "digitbench/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "diffnet/random.hpp"

namespace digitbench {

using diffnet::derive_seed;
using diffnet::Rng;

void LabeledImageSet::validate() const {
  if (images.rank() != 4) throw std::invalid_argument("image set: expected [n, c, h, w] images");
  if (images.dim(0) != labels.size())
    throw std::invalid_argument("image set: image count " + std::to_string(images.dim(0)) +
                                " does not match label count " + std::to_string(labels.size()));
  for (std::uint8_t l : labels)
    if (l > 9) throw std::invalid_argument("image set: label out of range [0, 9]");
}

std::uint64_t LabeledImageSet::content_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t d : images.shape()) mix(&d, sizeof(d));
  mix(images.data(), images.size() * sizeof(float));
  mix(labels.data(), labels.size());
  return h;
}

// ---------------------------------------------------------------------------
// IDX io

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
  std::uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("idx: truncated header in '" + path + "'");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Tensor<float> load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open '" + path + "'");
  const std::uint32_t magic = read_be32(in, path);
  if (magic != kImageMagic) {
    throw std::runtime_error("idx: wrong magic in '" + path + "' (expected image magic 0x00000803)");
  }
  const std::uint32_t n = read_be32(in, path);
  const std::uint32_t rows = read_be32(in, path);
  const std::uint32_t cols = read_be32(in, path);
  if (rows != 28 || cols != 28) {
    throw std::runtime_error("idx: dimension mismatch in '" + path + "': expected 28x28 images, got " +
                             std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n) * rows * cols);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw std::runtime_error("idx: truncated payload in '" + path + "'");
  }
  Tensor<float> images({n, 1, rows, cols});
  for (std::size_t i = 0; i < bytes.size(); ++i) images[i] = static_cast<float>(bytes[i]) / 255.0f;
  return images;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open '" + path + "'");
  const std::uint32_t magic = read_be32(in, path);
  if (magic != kLabelMagic) {
    throw std::runtime_error("idx: wrong magic in '" + path + "' (expected label magic 0x00000801)");
  }
  const std::uint32_t n = read_be32(in, path);
  std::vector<std::uint8_t> labels(n);
  in.read(reinterpret_cast<char*>(labels.data()), n);
  if (static_cast<std::size_t>(in.gcount()) != labels.size()) {
    throw std::runtime_error("idx: truncated payload in '" + path + "'");
  }
  return labels;
}

void save_idx_images(const std::string& path, const Tensor<float>& images) {
  if (images.rank() != 4 || images.dim(1) != 1)
    throw std::invalid_argument("idx: can only serialize [n, 1, 28, 28] images");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot write '" + path + "'");
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.dim(0)));
  write_be32(out, static_cast<std::uint32_t>(images.dim(2)));
  write_be32(out, static_cast<std::uint32_t>(images.dim(3)));
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.put(static_cast<char>(std::lround(images[i] * 255.0f)));
  }
}

void save_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot write '" + path + "'");
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

// ---------------------------------------------------------------------------
// Procedural glyph corpus

namespace {

// 5x7 digit bitmaps, one 5-bit row per byte.
const std::uint8_t kDigitRows[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

// Bilinear sample of the 5x7 bitmap treated as a [0,5]x[0,7] field.
float glyph_field(int digit, float gx, float gy) {
  const int x0 = static_cast<int>(std::floor(gx - 0.5f));
  const int y0 = static_cast<int>(std::floor(gy - 0.5f));
  const float fx = gx - 0.5f - static_cast<float>(x0);
  const float fy = gy - 0.5f - static_cast<float>(y0);
  auto cell = [&](int cx, int cy) -> float {
    if (cx < 0 || cx >= 5 || cy < 0 || cy >= 7) return 0.0f;
    return (kDigitRows[digit][cy] & (0x10 >> cx)) ? 1.0f : 0.0f;
  };
  return cell(x0, y0) * (1 - fx) * (1 - fy) + cell(x0 + 1, y0) * fx * (1 - fy) +
         cell(x0, y0 + 1) * (1 - fx) * fy + cell(x0 + 1, y0 + 1) * fx * fy;
}

}  // namespace

Tensor<float> render_glyph(int digit, std::uint64_t seed) {
  if (digit < 0 || digit > 9) throw std::invalid_argument("render_glyph: digit out of range");
  Rng rng(seed);
  std::uniform_real_distribution<float> unit(-1.0f, 1.0f);
  const float angle = 0.28f * unit(rng);
  const float scale_x = 1.0f + 0.18f * unit(rng);
  const float scale_y = 1.0f + 0.18f * unit(rng);
  const float shear = 0.20f * unit(rng);
  const float tx = 2.2f * unit(rng);
  const float ty = 2.2f * unit(rng);
  const float gamma = 1.0f + 0.35f * unit(rng);

  // Output pixel -> glyph coordinates (inverse map applied directly).
  const float ca = std::cos(angle), sa = std::sin(angle);
  const float cx = 14.0f + tx, cy = 14.0f + ty;
  const float px_per_gx = 3.4f * scale_x;  // glyph box ~17x21 px before jitter
  const float px_per_gy = 3.0f * scale_y;

  Tensor<float> img({1, 28, 28});
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) {
      float acc = 0.0f;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const float ox = static_cast<float>(x) + 0.25f + 0.5f * static_cast<float>(sx) - cx;
          const float oy = static_cast<float>(y) + 0.25f + 0.5f * static_cast<float>(sy) - cy;
          const float rx = ca * ox + sa * oy;
          const float ry = -sa * ox + ca * oy;
          const float gx = rx / px_per_gx + shear * ry / px_per_gy + 2.5f;
          const float gy = ry / px_per_gy + 3.5f;
          acc += glyph_field(digit, gx, gy);
        }
      }
      img[static_cast<std::size_t>(y) * 28 + x] = std::pow(acc / 4.0f, gamma);
    }
  }
  return img;
}

LabeledImageSet make_glyph_set(std::size_t n, std::uint64_t seed, const std::string& split) {
  LabeledImageSet set;
  set.split = split;
  set.images = Tensor<float>({n, 1, 28, 28});
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    const int digit = static_cast<int>(s % 10);
    set.labels[i] = static_cast<std::uint8_t>(digit);
    Tensor<float> img = render_glyph(digit, derive_seed(s, 1));
    std::copy(img.data(), img.data() + img.size(), set.images.data() + i * 28 * 28);
  }
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Target-domain synthesis

Tensor<float> make_patch(std::uint64_t seed) {
  Rng rng(seed);
  // Saturated control points (photo-like): values near 0.5 would erase the
  // digit under the |patch - digit| blend.
  std::uniform_real_distribution<float> low(0.02f, 0.32f);
  std::uniform_real_distribution<float> high(0.68f, 0.98f);
  std::bernoulli_distribution coin(0.5);
  constexpr int kGrid = 4;
  float grid[3][kGrid][kGrid];
  for (int c = 0; c < 3; ++c)
    for (int gy = 0; gy < kGrid; ++gy)
      for (int gx = 0; gx < kGrid; ++gx) grid[c][gy][gx] = coin(rng) ? high(rng) : low(rng);

  Tensor<float> patch({3, 28, 28});
  const float step = 28.0f / (kGrid - 1);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 28; ++y)
      for (int x = 0; x < 28; ++x) {
        const float gx = static_cast<float>(x) / step;
        const float gy = static_cast<float>(y) / step;
        const int x0 = std::min(kGrid - 2, static_cast<int>(gx));
        const int y0 = std::min(kGrid - 2, static_cast<int>(gy));
        const float fx = gx - static_cast<float>(x0);
        const float fy = gy - static_cast<float>(y0);
        patch[(static_cast<std::size_t>(c) * 28 + y) * 28 + x] =
            grid[c][y0][x0] * (1 - fx) * (1 - fy) + grid[c][y0][x0 + 1] * fx * (1 - fy) +
            grid[c][y0 + 1][x0] * (1 - fx) * fy + grid[c][y0 + 1][x0 + 1] * fx * fy;
      }
  return patch;
}

Tensor<float> synth_mnistm(const Tensor<float>& digit, const Tensor<float>& patch) {
  if (digit.size() != 28 * 28) throw std::invalid_argument("synth_mnistm: digit must be 1x28x28");
  if (patch.shape() != diffnet::Shape{3, 28, 28})
    throw std::invalid_argument("synth_mnistm: patch must be 3x28x28");
  Tensor<float> out({3, 28, 28});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 28 * 28; ++i)
      out[c * 28 * 28 + i] = std::abs(patch[c * 28 * 28 + i] - digit[i]);
  return out;
}

LabeledImageSet synth_mnistm_set(const LabeledImageSet& source, std::uint64_t seed,
                                 const std::string& split) {
  if (source.images.dim(1) != 1)
    throw std::invalid_argument("synth_mnistm_set: source must be 1-channel");
  LabeledImageSet out;
  out.split = split;
  out.labels = source.labels;
  const std::size_t n = source.size();
  out.images = Tensor<float>({n, 3, 28, 28});
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> digit({1, 28, 28});
    std::copy(source.images.data() + i * 28 * 28, source.images.data() + (i + 1) * 28 * 28,
              digit.data());
    Tensor<float> img = synth_mnistm(digit, make_patch(derive_seed(seed, i)));
    std::copy(img.data(), img.data() + img.size(), out.images.data() + i * 3 * 28 * 28);
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and batching

Normalization compute_normalization(const LabeledImageSet& set) {
  const std::size_t c = set.images.dim(1);
  const std::size_t per = set.images.dim(2) * set.images.dim(3);
  Normalization norm;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const std::size_t src_ch = c == 1 ? 0 : ch;
    double sum = 0.0, sum2 = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const float* p = set.images.data() + (i * c + src_ch) * per;
      for (std::size_t k = 0; k < per; ++k) {
        sum += p[k];
        sum2 += static_cast<double>(p[k]) * p[k];
        ++count;
      }
    }
    const double mean = sum / static_cast<double>(count);
    const double var = std::max(1e-8, sum2 / static_cast<double>(count) - mean * mean);
    norm.mean[ch] = static_cast<float>(mean);
    norm.std[ch] = static_cast<float>(std::sqrt(var));
  }
  return norm;
}

Tensor<float> make_batch(const LabeledImageSet& set, const std::vector<std::size_t>& indices,
                         std::size_t begin, std::size_t count, const Normalization& norm) {
  const std::size_t c = set.images.dim(1);
  const std::size_t per = set.images.dim(2) * set.images.dim(3);
  Tensor<float> batch({count, 3, set.images.dim(2), set.images.dim(3)});
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t idx = indices[begin + b];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const std::size_t src_ch = c == 1 ? 0 : ch;
      const float* src = set.images.data() + (idx * c + src_ch) * per;
      float* dst = batch.data() + (b * 3 + ch) * per;
      const float mean = norm.mean[ch], inv = 1.0f / norm.std[ch];
      for (std::size_t k = 0; k < per; ++k) dst[k] = (src[k] - mean) * inv;
    }
  }
  return batch;
}

DigitData make_digit_data(std::size_t n_train, std::size_t n_eval, std::uint64_t seed,
                          const std::string& data_dir) {
  DigitData data;
  if (data_dir.empty()) {
    data.train = make_glyph_set(n_train, derive_seed(seed, 0x100), "train");
    data.source_val = make_glyph_set(n_eval, derive_seed(seed, 0x200), "source_val");
    LabeledImageSet target_digits = make_glyph_set(n_eval, derive_seed(seed, 0x300), "target_src");
    data.target = synth_mnistm_set(target_digits, derive_seed(seed, 0x400), "target");
  } else {
    namespace fs = std::filesystem;
    const auto file = [&](const char* name) { return (fs::path(data_dir) / name).string(); };
    LabeledImageSet train;
    train.images = load_idx_images(file("train-images-idx3-ubyte"));
    train.labels = load_idx_labels(file("train-labels-idx1-ubyte"));
    train.split = "train";
    train.validate();
    LabeledImageSet test;
    test.images = load_idx_images(file("t10k-images-idx3-ubyte"));
    test.labels = load_idx_labels(file("t10k-labels-idx1-ubyte"));
    test.split = "test";
    test.validate();

    auto take = [](const LabeledImageSet& src, std::size_t from, std::size_t count,
                   const std::string& split) {
      LabeledImageSet out;
      out.split = split;
      count = std::min(count, src.size() - std::min(from, src.size()));
      out.images = Tensor<float>({count, 1, 28, 28});
      out.labels.assign(src.labels.begin() + static_cast<std::ptrdiff_t>(from),
                        src.labels.begin() + static_cast<std::ptrdiff_t>(from + count));
      std::copy(src.images.data() + from * 28 * 28, src.images.data() + (from + count) * 28 * 28,
                out.images.data());
      return out;
    };
    data.train = take(train, 0, n_train, "train");
    data.source_val = take(test, 0, n_eval, "source_val");
    LabeledImageSet target_digits = take(test, n_eval, n_eval, "target_src");
    data.target = synth_mnistm_set(target_digits, derive_seed(seed, 0x400), "target");
  }
  data.norm = compute_normalization(data.train);
  return data;
}

}  // namespace digitbench
