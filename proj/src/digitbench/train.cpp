// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "digitbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "diffnet/losses.hpp"

namespace digitbench {

using diffnet::Adam;
using diffnet::derive_seed;
using diffnet::LeakyRelu;
using diffnet::Linear;
using diffnet::Rng;
using diffnet::Tape;
using diffnet::Tensor;

DigitMethod parse_digit_method(const std::string& name) {
  if (name == "erm") return DigitMethod::kErm;
  if (name == "ib") return DigitMethod::kIb;
  if (name == "rib") return DigitMethod::kRib;
  if (name == "itsa") return DigitMethod::kItsa;
  throw std::invalid_argument("unknown digit method '" + name + "'");
}

const char* digit_method_name(DigitMethod method) {
  switch (method) {
    case DigitMethod::kErm: return "erm";
    case DigitMethod::kIb: return "ib";
    case DigitMethod::kRib: return "rib";
    case DigitMethod::kItsa: return "itsa";
  }
  return "?";
}

namespace {

void add_conv_trunk(Sequential<float>& m) {
  m.emplace<diffnet::Conv2d<float>>(3, 16, 3, 2, 1);
  m.emplace<LeakyRelu<float>>();
  m.emplace<diffnet::Conv2d<float>>(16, 32, 3, 2, 1);
  m.emplace<LeakyRelu<float>>();
}

constexpr std::size_t kFeatureDim = 32 * 7 * 7;

}  // namespace

DigitModel build_digit_model(const DigitRunConfig& cfg) {
  DigitModel model;
  model.method = cfg.method;
  model.rib_sigma = cfg.rib_sigma;
  const std::size_t k = cfg.latent_dim;
  switch (cfg.method) {
    case DigitMethod::kErm:
    case DigitMethod::kItsa: {
      add_conv_trunk(model.extractor);
      model.head.emplace<diffnet::Flatten<float>>();
      model.head.emplace<Linear<float>>(kFeatureDim, 128);
      model.head.emplace<LeakyRelu<float>>();
      model.head.emplace<Linear<float>>(128, 10);
      model.extractor.init_params(derive_seed(cfg.seed, 1));
      model.head.init_params(derive_seed(cfg.seed, 2));
      break;
    }
    case DigitMethod::kIb: {
      add_conv_trunk(model.trunk);
      model.trunk.emplace<diffnet::Flatten<float>>();
      model.trunk.emplace<Linear<float>>(kFeatureDim, 128);
      model.trunk.emplace<LeakyRelu<float>>();
      auto& mu = model.mu_head.emplace<Linear<float>>(128, k);
      auto& ls = model.logsig_head.emplace<Linear<float>>(128, k);
      model.classifier.emplace<Linear<float>>(k, 10);
      model.trunk.init_params(derive_seed(cfg.seed, 1));
      model.mu_head.init_params(derive_seed(cfg.seed, 2));
      model.logsig_head.init_params(derive_seed(cfg.seed, 3));
      model.classifier.init_params(derive_seed(cfg.seed, 4));
      (void)mu;
      // Start near sigma ~ 0.37 with a gentle dependence on the input.
      diffnet::scale(ls.weight(), 0.1f);
      ls.bias().fill(-1.0f);
      break;
    }
    case DigitMethod::kRib: {
      add_conv_trunk(model.mu_model);
      model.mu_model.emplace<diffnet::Flatten<float>>();
      model.mu_model.emplace<Linear<float>>(kFeatureDim, 128);
      model.mu_model.emplace<LeakyRelu<float>>();
      model.mu_model.emplace<Linear<float>>(128, k);
      model.classifier.emplace<Linear<float>>(k, 10);
      model.mu_model.init_params(derive_seed(cfg.seed, 1));
      model.classifier.init_params(derive_seed(cfg.seed, 4));
      break;
    }
  }
  return model;
}

std::vector<Tensor<float>*> DigitModel::parameters() {
  std::vector<Tensor<float>*> out;
  auto append = [&out](Sequential<float>& m) {
    for (Tensor<float>* p : m.parameters()) out.push_back(p);
  };
  switch (method) {
    case DigitMethod::kErm:
    case DigitMethod::kItsa:
      append(extractor);
      append(head);
      break;
    case DigitMethod::kIb:
      append(trunk);
      append(mu_head);
      append(logsig_head);
      append(classifier);
      break;
    case DigitMethod::kRib:
      append(mu_model);
      append(classifier);
      break;
  }
  return out;
}

std::vector<std::string> DigitModel::parameter_names() const {
  std::vector<std::string> out;
  auto append = [&out](const Sequential<float>& m, const char* prefix) {
    for (const std::string& n : m.parameter_names()) out.push_back(std::string(prefix) + "." + n);
  };
  switch (method) {
    case DigitMethod::kErm:
    case DigitMethod::kItsa:
      append(extractor, "extractor");
      append(head, "head");
      break;
    case DigitMethod::kIb:
      append(trunk, "trunk");
      append(mu_head, "mu_head");
      append(logsig_head, "logsig_head");
      append(classifier, "classifier");
      break;
    case DigitMethod::kRib:
      append(mu_model, "mu_model");
      append(classifier, "classifier");
      break;
  }
  return out;
}

std::vector<Tensor<float>> DigitModel::zero_grads() const {
  std::vector<Tensor<float>> out;
  auto append = [&out](const Sequential<float>& m) {
    for (const Tensor<float>* p : m.parameters()) out.emplace_back(p->shape());
  };
  switch (method) {
    case DigitMethod::kErm:
    case DigitMethod::kItsa:
      append(extractor);
      append(head);
      break;
    case DigitMethod::kIb:
      append(trunk);
      append(mu_head);
      append(logsig_head);
      append(classifier);
      break;
    case DigitMethod::kRib:
      append(mu_model);
      append(classifier);
      break;
  }
  return out;
}

Tensor<float> DigitModel::logits(const Tensor<float>& x_norm) const {
  switch (method) {
    case DigitMethod::kErm:
    case DigitMethod::kItsa:
      return head.forward(extractor.forward(x_norm));
    case DigitMethod::kIb:
      return classifier.forward(mu_head.forward(trunk.forward(x_norm)));
    case DigitMethod::kRib:
      return classifier.forward(mu_model.forward(x_norm));
  }
  throw std::logic_error("unreachable");
}

namespace {

std::span<Tensor<float>> grad_span(std::vector<Tensor<float>>& grads, std::size_t offset,
                                   std::size_t count) {
  return std::span<Tensor<float>>(grads).subspan(offset, count);
}

DigitStepStats itsa_like_step(DigitModel& model, const Tensor<float>& x,
                              const std::vector<std::uint8_t>& labels, const DigitRunConfig& cfg,
                              const Tensor<float>* frozen_u, std::vector<Tensor<float>>& grads) {
  const std::size_t ne = model.extractor.parameters().size();
  const std::size_t nh = model.head.parameters().size();
  auto ge = grad_span(grads, 0, ne);
  auto gh = grad_span(grads, ne, nh);

  Tape<float> te, th;
  Tensor<float> z = model.extractor.forward(x, te);
  Tensor<float> logits = model.head.forward(z, th);
  DigitStepStats stats;
  stats.task_loss = diffnet::softmax_cross_entropy(logits, labels);

  const bool fi_active =
      cfg.method == DigitMethod::kItsa && cfg.scp.lambda > 0.0 && cfg.scp.epsilon > 0.0;
  Tensor<float> dlogits = diffnet::softmax_cross_entropy_backward(logits, labels);
  if (fi_active && cfg.perturbed_task_branch) diffnet::scale(dlogits, 0.5f);
  Tensor<float> dz = model.head.backward(dlogits, th, gh);

  if (fi_active) {
    const Tensor<float> u = frozen_u
                                ? *frozen_u
                                : itsa::scp_direction(model.extractor, x,
                                                      static_cast<float>(cfg.scp.grad_norm_floor));
    const Tensor<float> x_star = itsa::scp_perturb(x, u, cfg.scp.epsilon);
    Tape<float> ts;
    Tensor<float> z_star = model.extractor.forward(x_star, ts);
    stats.regularizer = itsa::fisher_loss(z, z_star, cfg.reduction);
    auto [dz_fi, dzs_fi] = itsa::fisher_loss_backward(z, z_star, cfg.reduction);
    diffnet::axpy(dz, dz_fi, static_cast<float>(cfg.scp.lambda));
    diffnet::scale(dzs_fi, static_cast<float>(cfg.scp.lambda));

    if (cfg.perturbed_task_branch) {
      // Alternative reading: the perturbed features also feed the task loss.
      Tape<float> ths;
      Tensor<float> logits_s = model.head.forward(z_star, ths);
      stats.task_loss = 0.5 * stats.task_loss + 0.5 * diffnet::softmax_cross_entropy(logits_s, labels);
      Tensor<float> dlogits_s = diffnet::softmax_cross_entropy_backward(logits_s, labels);
      diffnet::scale(dlogits_s, 0.5f);
      Tensor<float> dzs_task = model.head.backward(dlogits_s, ths, gh);
      diffnet::axpy(dzs_fi, dzs_task, 1.0f);
    }
    model.extractor.backward(dz, te, ge);
    model.extractor.backward(dzs_fi, ts, ge);
    stats.total_loss = itsa::itsa_total_loss(stats.task_loss, stats.regularizer, cfg.scp.lambda);
  } else {
    model.extractor.backward(dz, te, ge);
    stats.total_loss = stats.task_loss;
  }
  return stats;
}

DigitStepStats ib_step(DigitModel& model, const Tensor<float>& x,
                       const std::vector<std::uint8_t>& labels, const DigitRunConfig& cfg,
                       std::uint64_t step_index, std::vector<Tensor<float>>& grads) {
  const std::size_t nt = model.trunk.parameters().size();
  const std::size_t nm = model.mu_head.parameters().size();
  const std::size_t nl = model.logsig_head.parameters().size();
  const std::size_t nc = model.classifier.parameters().size();
  auto gt = grad_span(grads, 0, nt);
  auto gm = grad_span(grads, nt, nm);
  auto gl = grad_span(grads, nt + nm, nl);
  auto gc = grad_span(grads, nt + nm + nl, nc);

  Tape<float> tt, tm, tl, tc;
  Tensor<float> h = model.trunk.forward(x, tt);
  Tensor<float> mu = model.mu_head.forward(h, tm);
  Tensor<float> logsig = model.logsig_head.forward(h, tl);
  Tensor<float> sigma(logsig.shape());
  for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = std::exp(logsig[i]);

  Tensor<float> eta(mu.shape());
  Rng rng(derive_seed(cfg.seed, 0xE0000000ULL + step_index));
  diffnet::fill_normal(eta, rng, 0.0f, 1.0f);
  Tensor<float> z = mu;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += sigma[i] * eta[i];

  Tensor<float> logits = model.classifier.forward(z, tc);
  DigitStepStats stats;
  stats.task_loss = diffnet::softmax_cross_entropy(logits, labels);
  stats.regularizer = fisherlab::vib_kl(mu, sigma);
  stats.total_loss = stats.task_loss + cfg.ib.beta * stats.regularizer;

  Tensor<float> dlogits = diffnet::softmax_cross_entropy_backward(logits, labels);
  Tensor<float> dz = model.classifier.backward(dlogits, tc, gc);
  auto [dmu_kl, dsig_kl] = fisherlab::vib_kl_backward(mu, sigma);
  Tensor<float> dmu = dz;
  diffnet::axpy(dmu, dmu_kl, static_cast<float>(cfg.ib.beta));
  Tensor<float> dlogsig(logsig.shape());
  for (std::size_t i = 0; i < dlogsig.size(); ++i) {
    const float dsig = dz[i] * eta[i] + static_cast<float>(cfg.ib.beta) * dsig_kl[i];
    dlogsig[i] = dsig * sigma[i];
  }
  Tensor<float> dh = model.mu_head.backward(dmu, tm, gm);
  Tensor<float> dh2 = model.logsig_head.backward(dlogsig, tl, gl);
  diffnet::axpy(dh, dh2, 1.0f);
  model.trunk.backward(dh, tt, gt);
  return stats;
}

DigitStepStats rib_step(DigitModel& model, const Tensor<float>& x,
                        const std::vector<std::uint8_t>& labels, const DigitRunConfig& cfg,
                        std::uint64_t step_index, std::vector<Tensor<float>>& grads) {
  const std::size_t nm = model.mu_model.parameters().size();
  const std::size_t nc = model.classifier.parameters().size();
  auto gm = grad_span(grads, 0, nm);
  auto gc = grad_span(grads, nm, nc);

  Tape<float> tm, tc;
  Tensor<float> mu = model.mu_model.forward(x, tm);
  Tensor<float> eta(mu.shape());
  Rng rng(derive_seed(cfg.seed, 0xE0000000ULL + step_index));
  diffnet::fill_normal(eta, rng, 0.0f, 1.0f);
  Tensor<float> z = mu;
  diffnet::axpy(z, eta, model.rib_sigma);

  Tensor<float> logits = model.classifier.forward(z, tc);
  DigitStepStats stats;
  stats.task_loss = diffnet::softmax_cross_entropy(logits, labels);

  Tensor<float> dlogits = diffnet::softmax_cross_entropy_backward(logits, labels);
  Tensor<float> dz = model.classifier.backward(dlogits, tc, gc);
  model.mu_model.backward(dz, tm, gm);

  std::vector<Tensor<float>> mu_grads(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(nm));
  stats.regularizer = fisherlab::rib_penalty(
      model.mu_model, model.rib_sigma, x, cfg.ib.n_probes,
      derive_seed(cfg.seed, 0x51B00000ULL + step_index), &mu_grads, cfg.ib.beta_fisher);
  for (std::size_t k = 0; k < nm; ++k) grads[k] = std::move(mu_grads[k]);

  stats.total_loss = stats.task_loss + cfg.ib.beta_fisher * stats.regularizer;
  return stats;
}

}  // namespace

DigitStepStats digit_train_step(DigitModel& model, Adam<float>& opt, const Tensor<float>& x,
                                const std::vector<std::uint8_t>& labels, const DigitRunConfig& cfg,
                                std::uint64_t step_index, const Tensor<float>* frozen_u,
                                std::vector<Tensor<float>>* out_grads) {
  std::vector<Tensor<float>> grads = model.zero_grads();
  DigitStepStats stats;
  switch (cfg.method) {
    case DigitMethod::kErm:
    case DigitMethod::kItsa:
      stats = itsa_like_step(model, x, labels, cfg, frozen_u, grads);
      break;
    case DigitMethod::kIb:
      stats = ib_step(model, x, labels, cfg, step_index, grads);
      break;
    case DigitMethod::kRib:
      stats = rib_step(model, x, labels, cfg, step_index, grads);
      break;
  }
  if (!std::isfinite(stats.total_loss)) {
    throw std::runtime_error("digit training diverged (non-finite loss) at step " +
                             std::to_string(step_index));
  }
  if (out_grads) *out_grads = grads;
  opt.step(model.parameters(), grads);
  return stats;
}

DigitModel train_digit(const DigitRunConfig& cfg, const LabeledImageSet& train,
                       const LabeledImageSet& source_val, const Normalization& norm,
                       harness::MetricsLog* metrics, AccessLog* access) {
  if (access) {
    access->touch(train);
    access->touch(source_val);
  }
  DigitModel model = build_digit_model(cfg);
  model.norm = norm;
  Adam<float> opt({cfg.lr, 0.9f, 0.999f, 1e-8f}, model.parameters(), model.parameter_names());

  const std::size_t n = std::min(cfg.train_subset, train.size());
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  const char* method = digit_method_name(cfg.method);
  std::uint64_t step_index = 0;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(indices.begin(), indices.end(), shuffle_rng);
    double task_sum = 0.0, reg_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t off = 0; off + cfg.batch_size <= n; off += cfg.batch_size) {
      Tensor<float> x = make_batch(train, indices, off, cfg.batch_size, norm);
      std::vector<std::uint8_t> labels(cfg.batch_size);
      for (std::size_t b = 0; b < cfg.batch_size; ++b) labels[b] = train.labels[indices[off + b]];
      const DigitStepStats stats = digit_train_step(model, opt, x, labels, cfg, step_index);
      task_sum += stats.task_loss;
      reg_sum += stats.regularizer;
      if (metrics && cfg.method == DigitMethod::kItsa) {
        metrics->append({cfg.run_id, method, cfg.seed, static_cast<std::int64_t>(step_index),
                         "train_step", "l_fi", stats.regularizer});
      }
      ++step_index;
      ++steps;
    }
    if (metrics && steps > 0) {
      metrics->append({cfg.run_id, method, cfg.seed, epoch, "train", "task_loss",
                       task_sum / static_cast<double>(steps)});
      const char* reg_name = cfg.method == DigitMethod::kItsa  ? "l_fi_mean"
                             : cfg.method == DigitMethod::kIb  ? "kl"
                             : cfg.method == DigitMethod::kRib ? "rib_penalty"
                                                               : "none";
      if (cfg.method != DigitMethod::kErm) {
        metrics->append({cfg.run_id, method, cfg.seed, epoch, "train", reg_name,
                         reg_sum / static_cast<double>(steps)});
      }
      metrics->append({cfg.run_id, method, cfg.seed, epoch, "source_val", "top1",
                       eval_top1(model, source_val)});
    }
  }
  return model;
}

double eval_top1(const DigitModel& model, const LabeledImageSet& set) {
  const std::size_t n = set.size();
  if (n == 0) return 0.0;
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t off = 0; off < n; off += kChunk) {
    const std::size_t count = std::min(kChunk, n - off);
    Tensor<float> x = make_batch(set, indices, off, count, model.norm);
    Tensor<float> logits = model.logits(x);
    const std::size_t k = logits.dim(1);
    for (std::size_t b = 0; b < count; ++b) {
      const float* row = logits.data() + b * k;
      std::size_t best = 0;
      for (std::size_t i = 1; i < k; ++i)
        if (row[i] > row[best]) best = i;
      if (best == set.labels[off + b]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace digitbench
