// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "digitbench/train.hpp"

using namespace digitbench;
using diffnet::Tensor;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

DigitRunConfig small_config(DigitMethod method, std::uint64_t seed) {
  DigitRunConfig cfg;
  cfg.method = method;
  cfg.seed = seed;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.train_subset = 1000;
  cfg.eval_subset = 300;
  return cfg;
}

}  // namespace

TEST_CASE("load_idx: header constants and payloads") {
  // Image file: magic 00 00 08 03, dims 2 x 28 x 28, 1568 pixel bytes.
  const std::string img_path = temp_path("itsa_test_images.idx");
  {
    std::ofstream out(img_path, std::ios::binary);
    const std::uint8_t header[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (int i = 0; i < 2 * 28 * 28; ++i) out.put(static_cast<char>(i % 251));
  }
  Tensor<float> images = load_idx_images(img_path);
  CHECK(images.shape() == diffnet::Shape{2, 1, 28, 28});
  CHECK(images[0] == 0.0f);
  CHECK(images[1] == doctest::Approx(1.0f / 255.0f));

  // Label file: magic 00 00 08 01, dim 2, bytes {3, 7}.
  const std::string lbl_path = temp_path("itsa_test_labels.idx");
  {
    std::ofstream out(lbl_path, std::ios::binary);
    const std::uint8_t header[] = {0, 0, 8, 1, 0, 0, 0, 2, 3, 7};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
  }
  CHECK(load_idx_labels(lbl_path) == std::vector<std::uint8_t>{3, 7});
}

TEST_CASE("load_idx: wrong magic, truncation and dimension mismatch are distinct") {
  const std::string path = temp_path("itsa_bad.idx");
  {
    std::ofstream out(path, std::ios::binary);
    const std::uint8_t header[] = {0, 0, 8, 1, 0, 0, 0, 2, 3, 7};  // label magic
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
  }
  CHECK_THROWS_WITH_AS(load_idx_images(path),
                       doctest::Contains("wrong magic"), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    const std::uint8_t header[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (int i = 0; i < 100; ++i) out.put(0);  // payload too short
  }
  CHECK_THROWS_WITH_AS(load_idx_images(path),
                       doctest::Contains("truncated"), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    const std::uint8_t header[] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 14, 0, 0, 0, 14};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (int i = 0; i < 14 * 14; ++i) out.put(0);
  }
  CHECK_THROWS_WITH_AS(load_idx_images(path),
                       doctest::Contains("dimension mismatch"), std::runtime_error);
}

TEST_CASE("idx round trip: parse -> serialize -> parse is bit-identical") {
  const LabeledImageSet set = make_glyph_set(64, 97, "train");
  const std::string img_a = temp_path("itsa_rt_a.idx");
  const std::string img_b = temp_path("itsa_rt_b.idx");
  save_idx_images(img_a, set.images);
  Tensor<float> reparsed = load_idx_images(img_a);
  save_idx_images(img_b, reparsed);
  CHECK(slurp(img_a) == slurp(img_b));

  const std::string lbl_a = temp_path("itsa_rt_labels_a.idx");
  const std::string lbl_b = temp_path("itsa_rt_labels_b.idx");
  save_idx_labels(lbl_a, set.labels);
  save_idx_labels(lbl_b, load_idx_labels(lbl_a));
  CHECK(slurp(lbl_a) == slurp(lbl_b));
}

TEST_CASE("synth_mnistm: blend rule at the extremes") {
  Tensor<float> patch = make_patch(5);
  Tensor<float> digit({1, 28, 28});  // all zeros
  Tensor<float> out = synth_mnistm(digit, patch);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == patch[i]);  // |v - 0| = v
  digit.fill(1.0f);
  out = synth_mnistm(digit, patch);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(1.0f - patch[i]));
}

TEST_CASE("synth_mnistm: deterministic per (digit index, seed)") {
  const LabeledImageSet src = make_glyph_set(8, 3, "x");
  const LabeledImageSet a = synth_mnistm_set(src, 41, "target");
  const LabeledImageSet b = synth_mnistm_set(src, 41, "target");
  CHECK(a.images.vec() == b.images.vec());
  const LabeledImageSet c = synth_mnistm_set(src, 42, "target");
  CHECK(a.images.vec() != c.images.vec());
}

TEST_CASE("glyph corpus: values in range, labels consistent, renders distinct") {
  const LabeledImageSet set = make_glyph_set(200, 11, "train");
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    CHECK(set.images[i] >= 0.0f);
    CHECK(set.images[i] <= 1.0f);
  }
  // Same digit, different seeds -> different images (jitter active).
  Tensor<float> g1 = render_glyph(5, 1);
  Tensor<float> g2 = render_glyph(5, 2);
  CHECK(g1.vec() != g2.vec());
}

TEST_CASE("eval_top1: constant and perfect predictors") {
  // A model whose head always produces the same logits favors class 0 after
  // zeroed weights and a fixed bias pattern.
  DigitRunConfig cfg = small_config(DigitMethod::kErm, 1);
  DigitModel model = build_digit_model(cfg);
  // Zero every parameter, then bias the final layer toward class 0.
  for (Tensor<float>* p : model.parameters()) p->fill(0.0f);
  auto head_params = model.head.parameters();
  (*head_params.back())[0] = 1.0f;  // final bias, class 0

  LabeledImageSet set = make_glyph_set(200, 12, "eval");
  std::size_t zeros = 0;
  for (std::uint8_t l : set.labels) zeros += l == 0;
  const double expected = 100.0 * static_cast<double>(zeros) / 200.0;
  CHECK(eval_top1(model, set) == doctest::Approx(expected));
}

TEST_CASE("eval_top1: agrees with an independent argmax recomputation") {
  DigitRunConfig cfg = small_config(DigitMethod::kErm, 21);
  DigitData data = make_digit_data(cfg.train_subset, 400, cfg.seed, "");
  DigitModel model = train_digit(cfg, data.train, data.source_val, data.norm);

  const double reported = eval_top1(model, data.source_val);
  // Independent pass: one sample at a time, straight argmax over logits.
  std::size_t correct = 0;
  std::vector<std::size_t> ids(data.source_val.size());
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < data.source_val.size(); ++i) {
    Tensor<float> x = make_batch(data.source_val, ids, i, 1, model.norm);
    Tensor<float> logits = model.logits(x);
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.dim(1); ++k)
      if (logits[k] > logits[best]) best = k;
    correct += best == data.source_val.labels[i];
  }
  const double recomputed = 100.0 * static_cast<double>(correct) / static_cast<double>(data.source_val.size());
  CHECK(std::abs(reported - recomputed) < 0.5);
}

TEST_CASE("train_digit: one ERM epoch on 1000 samples clears 80% source accuracy") {
  DigitRunConfig cfg = small_config(DigitMethod::kErm, 5);
  DigitData data = make_digit_data(cfg.train_subset, cfg.eval_subset, cfg.seed, "");
  DigitModel model = train_digit(cfg, data.train, data.source_val, data.norm);
  CHECK(eval_top1(model, data.source_val) > 80.0);
}

TEST_CASE("train_digit: itsa with lambda = 0 reproduces the ERM trajectory bit for bit") {
  DigitData data = make_digit_data(600, 100, 7, "");
  DigitRunConfig erm_cfg = small_config(DigitMethod::kErm, 7);
  erm_cfg.train_subset = 600;
  DigitRunConfig itsa_cfg = small_config(DigitMethod::kItsa, 7);
  itsa_cfg.train_subset = 600;
  itsa_cfg.scp.lambda = 0.0;

  DigitModel erm = train_digit(erm_cfg, data.train, data.source_val, data.norm);
  DigitModel itsa_model = train_digit(itsa_cfg, data.train, data.source_val, data.norm);
  auto pe = erm.parameters();
  auto pi = itsa_model.parameters();
  REQUIRE(pe.size() == pi.size());
  for (std::size_t k = 0; k < pe.size(); ++k) CHECK(pe[k]->vec() == pi[k]->vec());
}

TEST_CASE("train_digit: itsa epsilon = 0 training step matches the baseline step bitwise") {
  DigitData data = make_digit_data(64, 32, 9, "");
  DigitRunConfig cfg = small_config(DigitMethod::kItsa, 9);
  cfg.scp.epsilon = 0.0;

  DigitModel a = build_digit_model(cfg);
  DigitRunConfig erm_cfg = cfg;
  erm_cfg.method = DigitMethod::kErm;
  DigitModel b = build_digit_model(erm_cfg);

  std::vector<std::size_t> ids(64);
  std::iota(ids.begin(), ids.end(), 0);
  Tensor<float> x = make_batch(data.train, ids, 0, 32, data.norm);
  std::vector<std::uint8_t> labels(data.train.labels.begin(), data.train.labels.begin() + 32);

  diffnet::Adam<float> oa({cfg.lr, 0.9f, 0.999f, 1e-8f}, a.parameters());
  diffnet::Adam<float> ob({cfg.lr, 0.9f, 0.999f, 1e-8f}, b.parameters());
  std::vector<Tensor<float>> ga, gb;
  digit_train_step(a, oa, x, labels, cfg, 0, nullptr, &ga);
  digit_train_step(b, ob, x, labels, erm_cfg, 0, nullptr, &gb);
  REQUIRE(ga.size() == gb.size());
  for (std::size_t k = 0; k < ga.size(); ++k) CHECK(ga[k].vec() == gb[k].vec());
}

TEST_CASE("train_digit: recomputed u and frozen u give bit-identical gradients") {
  DigitData data = make_digit_data(64, 32, 13, "");
  DigitRunConfig cfg = small_config(DigitMethod::kItsa, 13);

  std::vector<std::size_t> ids(64);
  std::iota(ids.begin(), ids.end(), 0);
  Tensor<float> x = make_batch(data.train, ids, 0, 32, data.norm);
  std::vector<std::uint8_t> labels(data.train.labels.begin(), data.train.labels.begin() + 32);

  DigitModel m1 = build_digit_model(cfg);
  DigitModel m2 = build_digit_model(cfg);
  const Tensor<float> u =
      itsa::scp_direction(m1.extractor, x, static_cast<float>(cfg.scp.grad_norm_floor));

  diffnet::Adam<float> o1({cfg.lr, 0.9f, 0.999f, 1e-8f}, m1.parameters());
  diffnet::Adam<float> o2({cfg.lr, 0.9f, 0.999f, 1e-8f}, m2.parameters());
  std::vector<Tensor<float>> g_recomputed, g_frozen;
  digit_train_step(m1, o1, x, labels, cfg, 0, nullptr, &g_recomputed);
  digit_train_step(m2, o2, x, labels, cfg, 0, &u, &g_frozen);
  REQUIRE(g_recomputed.size() == g_frozen.size());
  for (std::size_t k = 0; k < g_recomputed.size(); ++k)
    CHECK(g_recomputed[k].vec() == g_frozen[k].vec());
}

TEST_CASE("train_digit: itsa drives the mean L_FI down within the first epoch") {
  DigitRunConfig cfg = small_config(DigitMethod::kItsa, 31);
  cfg.train_subset = 2000;
  cfg.epochs = 1;
  DigitData data = make_digit_data(cfg.train_subset, 200, cfg.seed, "");
  harness::MetricsLog metrics;
  train_digit(cfg, data.train, data.source_val, data.norm, &metrics);

  std::vector<double> lfi;
  for (const auto& r : metrics.records())
    if (r.metric == "l_fi" && r.split == "train_step") lfi.push_back(r.value);
  REQUIRE(lfi.size() >= 20);
  const std::size_t k = 10;
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < k; ++i) {
    head += lfi[i];
    tail += lfi[lfi.size() - 1 - i];
  }
  CHECK(tail / static_cast<double>(k) < head / static_cast<double>(k));
}

TEST_CASE("train_digit: single-source protocol, target hash never touched") {
  DigitRunConfig cfg = small_config(DigitMethod::kItsa, 17);
  cfg.train_subset = 300;
  DigitData data = make_digit_data(cfg.train_subset, 100, cfg.seed, "");
  AccessLog log;
  train_digit(cfg, data.train, data.source_val, data.norm, nullptr, &log);
  CHECK_FALSE(log.contains(data.target.content_hash()));
  CHECK(log.contains(data.train.content_hash()));
}

TEST_CASE("train_digit: seeded determinism of the metrics stream") {
  DigitRunConfig cfg = small_config(DigitMethod::kIb, 23);
  cfg.train_subset = 400;
  DigitData data = make_digit_data(cfg.train_subset, 100, cfg.seed, "");
  harness::MetricsLog m1, m2;
  train_digit(cfg, data.train, data.source_val, data.norm, &m1);
  train_digit(cfg, data.train, data.source_val, data.norm, &m2);
  CHECK(m1.to_csv() == m2.to_csv());
}

TEST_CASE("train_digit: ib and rib steps run and regularizers are finite") {
  DigitData data = make_digit_data(128, 64, 3, "");
  for (DigitMethod method : {DigitMethod::kIb, DigitMethod::kRib}) {
    DigitRunConfig cfg = small_config(method, 3);
    cfg.train_subset = 128;
    DigitModel model = build_digit_model(cfg);
    model.norm = data.norm;
    diffnet::Adam<float> opt({cfg.lr, 0.9f, 0.999f, 1e-8f}, model.parameters());
    std::vector<std::size_t> ids(128);
    std::iota(ids.begin(), ids.end(), 0);
    Tensor<float> x = make_batch(data.train, ids, 0, 32, data.norm);
    std::vector<std::uint8_t> labels(data.train.labels.begin(), data.train.labels.begin() + 32);
    const DigitStepStats stats = digit_train_step(model, opt, x, labels, cfg, 0);
    CHECK(std::isfinite(stats.total_loss));
    CHECK(stats.regularizer >= 0.0);
  }
}
