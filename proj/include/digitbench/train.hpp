// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// The four digit-recognition training methods (erm / ib / rib / itsa) over a
// shared conv backbone, with top-1 evaluation and a data-access log proving
// the single-source protocol.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diffnet/adam.hpp"
#include "diffnet/model.hpp"
#include "digitbench/data.hpp"
#include "fisherlab/estimators.hpp"
#include "harness/metrics.hpp"
#include "itsa/itsa.hpp"

namespace digitbench {

using diffnet::Sequential;

enum class DigitMethod { kErm, kIb, kRib, kItsa };

DigitMethod parse_digit_method(const std::string& name);
const char* digit_method_name(DigitMethod method);

struct DigitRunConfig {
  DigitMethod method = DigitMethod::kErm;
  std::uint64_t seed = 1;
  std::int64_t epochs = 3;
  std::size_t batch_size = 64;
  float lr = 1e-3f;
  std::size_t train_subset = 8000;
  std::size_t eval_subset = 2000;
  std::size_t latent_dim = 32;
  std::string data_dir;
  std::string run_id = "run";

  itsa::ScpConfig scp;                              // itsa
  itsa::Reduction reduction = itsa::Reduction::kMean;
  bool perturbed_task_branch = false;               // non-default reading
  fisherlab::IbConfig ib;                           // ib / rib
  float rib_sigma = 1.0f;
};

/// Hashes of every set touched while training; the target-domain hash must
/// never appear here (single-source protocol).
struct AccessLog {
  std::vector<std::uint64_t> hashes;
  void touch(const LabeledImageSet& set) { hashes.push_back(set.content_hash()); }
  bool contains(std::uint64_t h) const {
    return std::find(hashes.begin(), hashes.end(), h) != hashes.end();
  }
};

struct DigitModel {
  DigitMethod method = DigitMethod::kErm;
  Normalization norm;

  // erm / itsa: extractor -> features z -> head -> logits.
  Sequential<float> extractor, head;
  // ib: shared trunk with mu / log-sigma heads and a classifier on sampled z.
  Sequential<float> trunk, mu_head, logsig_head;
  // rib: the whole mu path as one model (the Fisher penalty differentiates it).
  Sequential<float> mu_model;
  Sequential<float> classifier;
  float rib_sigma = 1.0f;

  std::vector<diffnet::Tensor<float>*> parameters();
  std::vector<std::string> parameter_names() const;
  std::vector<diffnet::Tensor<float>> zero_grads() const;

  /// Deterministic evaluation path (ib/rib use the mean latent).
  diffnet::Tensor<float> logits(const diffnet::Tensor<float>& x_norm) const;
};

DigitModel build_digit_model(const DigitRunConfig& cfg);

struct DigitStepStats {
  double task_loss = 0.0;
  double regularizer = 0.0;  // l_fi (itsa), kl (ib), fisher penalty (rib)
  double total_loss = 0.0;
};

/// One optimization step on a normalized batch. For itsa, frozen_u injects a
/// precomputed perturbation direction (used to demonstrate that no gradient
/// flows through u); out_grads receives the pre-update gradients when set.
DigitStepStats digit_train_step(DigitModel& model, diffnet::Adam<float>& opt,
                                const diffnet::Tensor<float>& x,
                                const std::vector<std::uint8_t>& labels, const DigitRunConfig& cfg,
                                std::uint64_t step_index,
                                const diffnet::Tensor<float>* frozen_u = nullptr,
                                std::vector<diffnet::Tensor<float>>* out_grads = nullptr);

/// Trains on the source train set only, logging per-epoch source-validation
/// accuracy and the method's regularizer stream.
DigitModel train_digit(const DigitRunConfig& cfg, const LabeledImageSet& train,
                       const LabeledImageSet& source_val, const Normalization& norm,
                       harness::MetricsLog* metrics = nullptr, AccessLog* access = nullptr);

/// Top-1 accuracy in percent.
double eval_top1(const DigitModel& model, const LabeledImageSet& set);

}  // namespace digitbench
