// End-to-end training and evaluation: loss assembly, budget and SNR sampling
// regimes, the optimizer loop, and accuracy evaluation at arbitrary
// (alpha, r, SNR).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/csv.hpp"
#include "tokcom/dataset.hpp"
#include "tokcom/djscc.hpp"

namespace tokcom {

struct TrainConfig {
  std::size_t pretrain_epochs = 6;
  std::size_t epochs = 10;  // DJSCC fine-tune epochs
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double lambda_s = 2.0;
  double lambda_r = 1.0;
  double epsilon = 0.05;
  std::string regime = "robust";  // "robust" | "noiseless"
  double snr_low_db = -20.0;
  double snr_high_db = 20.0;
  bool freeze_backbone = false;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  std::string budget_statistic = "count";  // "count" | "mean"
  double budget_saturation = 0.05;

  void validate() const {
    if (lambda_s < 0.0 || lambda_r < 0.0)
      throw std::invalid_argument("TrainConfig: penalty weights must be non-negative");
    if (regime != "robust" && regime != "noiseless")
      throw std::invalid_argument("TrainConfig: regime must be robust or noiseless");
    if (budget_statistic != "count" && budget_statistic != "mean")
      throw std::invalid_argument("TrainConfig: budget_statistic must be count or mean");
    if (!(snr_low_db < snr_high_db))
      throw std::invalid_argument("TrainConfig: robust SNR range must satisfy low < high");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch size must be positive");
  }
};

struct SnrSpec {
  ChannelMode mode = ChannelMode::kAwgn;
  double snr_db = 10.0;
};

// One budget draw per training sample, uniform over (0, 1].
inline double sample_budget(RngStream& rng) { return rng.uniform_open_closed(); }

// Robust regime draws a fresh SNR per sample; noiseless disables the channel.
inline SnrSpec sample_training_snr(const TrainConfig& cfg, RngStream& rng) {
  if (cfg.regime == "noiseless") return SnrSpec{ChannelMode::kNoiseless, 0.0};
  return SnrSpec{ChannelMode::kAwgn, rng.uniform(cfg.snr_low_db, cfg.snr_high_db)};
}

// Adam with bias correction and global-norm gradient clipping.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ad::Parameter*> params, double lr, double clip_norm = 1.0)
      : params_(std::move(params)), lr_(lr), clip_norm_(clip_norm) {
    states_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      states_[i].m.assign(params_[i]->value.size(), 0.0);
      states_[i].v.assign(params_[i]->value.size(), 0.0);
    }
  }

  void zero_grad() {
    for (ad::Parameter* p : params_) p->zero_grad();
  }

  double grad_norm() const {
    double sq = 0.0;
    for (ad::Parameter* p : params_)
      for (std::size_t k = 0; k < p->grad.size(); ++k) sq += p->grad[k] * p->grad[k];
    return std::sqrt(sq);
  }

  void step() {
    double scale = 1.0;
    if (clip_norm_ > 0.0) {
      double norm = grad_norm();
      if (norm > clip_norm_) scale = clip_norm_ / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ad::Parameter& p = *params_[i];
      State& s = states_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        double g = p.grad[k] * scale;
        s.m[k] = beta1_ * s.m[k] + (1.0 - beta1_) * g;
        s.v[k] = beta2_ * s.v[k] + (1.0 - beta2_) * g * g;
        double mhat = s.m[k] / bc1;
        double vhat = s.v[k] / bc2;
        p.value[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
  };
  std::vector<ad::Parameter*> params_;
  std::vector<State> states_;
  double lr_, clip_norm_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
};

inline std::vector<ad::Parameter*> collect_params(DjsccModel& model, bool backbone_only = false,
                                                  bool skip_backbone = false) {
  std::vector<ad::Parameter*> out;
  model.vit.for_each_param([&](ad::Parameter& p) {
    if (!skip_backbone) out.push_back(&p);
  });
  if (!backbone_only) {
    out.push_back(&model.budget.low);
    out.push_back(&model.budget.high);
    for (SelectorParams& s : model.selectors)
      s.for_each_param([&](ad::Parameter& p) { out.push_back(&p); });
    model.bank.for_each_param([&](ad::Parameter& p) { out.push_back(&p); });
  } else {
    // The budget pair rides through the backbone during pretraining.
    out.push_back(&model.budget.low);
    out.push_back(&model.budget.high);
  }
  return out;
}

struct TrainResult {
  bool diverged = false;
  std::string diagnostic;
  double final_loss = 0.0;
  std::size_t steps = 0;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  return idx;
}

inline std::string check_finite(const char* term, double v) {
  if (!std::isfinite(v)) return std::string("non-finite ") + term;
  return {};
}

}  // namespace detail

// Phase 1: plain backbone training, budget fixed at 1, no selection, no
// channel. Mirrors starting from a pretrained classifier.
inline TrainResult train_backbone(DjsccModel& model, const Dataset& ds, const TrainConfig& cfg,
                                  csv::Writer* metrics = nullptr) {
  cfg.validate();
  if (ds.size() == 0) throw std::invalid_argument("train_backbone: empty dataset");
  TrainResult res;
  AdamOptimizer opt(collect_params(model, /*backbone_only=*/true), cfg.lr, cfg.clip_norm);
  const std::size_t s = model.cfg.split;
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    RngStream shuffle_rng(cfg.seed, "trainer/shuffle/pretrain", epoch);
    auto order = detail::shuffled_indices(ds.size(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t count = std::min(cfg.batch_size, order.size() - start);
      opt.zero_grad();
      for (std::size_t b = 0; b < count; ++b) {
        std::size_t i = order[start + b];
        ad::Tape tape;
        TapeEngine e{tape};
        auto logits = backbone_forward(e, model, to_patches(ds.images[i], model.cfg));
        auto loss = tape.cross_entropy(logits, {ds.labels[i]});
        double lv = tape.value(loss).value();
        std::string err = detail::check_finite("cross-entropy", lv);
        if (!err.empty()) {
          res.diverged = true;
          res.diagnostic = err + " in pretrain epoch " + std::to_string(epoch);
          return res;
        }
        epoch_loss += lv;
        if (kernels::argmax_row(tape.value(logits)) == ds.labels[i]) ++correct;
        tape.backward(loss, Tensor::scalar(1.0 / static_cast<double>(count)));
        ++res.steps;
      }
      opt.step();
    }
    res.final_loss = epoch_loss / static_cast<double>(ds.size());
    if (metrics != nullptr) {
      std::vector<std::string> row = {csv::num(epoch), csv::num(res.steps),
                                      csv::num(res.final_loss), csv::num(0.0), csv::num(0.0)};
      for (std::size_t l = 0; l < s; ++l) row.push_back(csv::num(1.0));
      row.push_back(csv::num(static_cast<double>(correct) / static_cast<double>(ds.size())));
      metrics->write_row(row);
    }
  }
  return res;
}

// Phase 2: end-to-end DJSCC fine-tuning with per-sample budget, ratio and
// channel sampling.
inline TrainResult train_djscc(DjsccModel& model, const Dataset& ds, const TrainConfig& cfg,
                               csv::Writer* metrics = nullptr) {
  cfg.validate();
  if (ds.size() == 0) throw std::invalid_argument("train_djscc: empty dataset");
  TrainResult res;
  if (cfg.freeze_backbone)
    model.vit.for_each_param([](ad::Parameter& p) { p.requires_grad = false; });
  AdamOptimizer opt(collect_params(model, false, cfg.freeze_backbone), cfg.lr, cfg.clip_norm);
  const std::vector<double> ratios = model.bank.ratios();
  const std::size_t s = model.cfg.split;

  RngStream budget_rng(cfg.seed, "budget");
  std::uint64_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle_rng(cfg.seed, "trainer/shuffle/djscc", epoch);
    auto order = detail::shuffled_indices(ds.size(), shuffle_rng);
    double ce_sum = 0.0, budget_sum = 0.0, sparsity_sum = 0.0;
    std::vector<double> mask_sums(s, 0.0);
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t count = std::min(cfg.batch_size, order.size() - start);
      opt.zero_grad();
      for (std::size_t b = 0; b < count; ++b) {
        std::size_t i = order[start + b];
        BudgetSpec spec;
        spec.alpha = sample_budget(budget_rng);
        spec.epsilon = cfg.epsilon;
        spec.lambda_s = cfg.lambda_s;
        spec.lambda_r = cfg.lambda_r;
        spec.statistic = cfg.budget_statistic == "mean" ? BudgetStatistic::kMean
                                                        : BudgetStatistic::kCount;
        spec.saturation = cfg.budget_saturation;
        double r = ratios[budget_rng.uniform_index(ratios.size())];

        RngStream chan_rng(cfg.seed, "channel", ++global_step);
        SnrSpec snr = sample_training_snr(cfg, chan_rng);
        ChannelDraw draw = draw_channel(snr.mode, snr.snr_db, chan_rng);

        ad::Tape tape;
        auto fwd = djscc_soft_forward(tape, model, to_patches(ds.images[i], model.cfg),
                                      ds.labels[i], spec, r, draw);
        double ce = tape.value(fwd.ce).value();
        double bl = tape.value(fwd.budget_loss).value();
        double sl = tape.value(fwd.sparsity_loss).value();
        std::string err = detail::check_finite("cross-entropy", ce);
        if (err.empty()) err = detail::check_finite("budget penalty", bl);
        if (err.empty()) err = detail::check_finite("sparsity regularizer", sl);
        if (!err.empty()) {
          res.diverged = true;
          res.diagnostic = err + " at step " + std::to_string(global_step);
          return res;
        }
        ce_sum += ce;
        budget_sum += bl;
        sparsity_sum += sl;
        for (std::size_t l = 0; l < s; ++l)
          mask_sums[l] += tape.value(fwd.block_mean_masks[l]).value();
        if (kernels::argmax_row(tape.value(fwd.logits)) == ds.labels[i]) ++correct;
        tape.backward(fwd.loss, Tensor::scalar(1.0 / static_cast<double>(count)));
        ++res.steps;
      }
      opt.step();
    }
    const double inv_n = 1.0 / static_cast<double>(ds.size());
    res.final_loss = (ce_sum + cfg.lambda_s * budget_sum + cfg.lambda_r * sparsity_sum) * inv_n;
    if (metrics != nullptr) {
      std::vector<std::string> row = {csv::num(epoch), csv::num(res.steps),
                                      csv::num(ce_sum * inv_n), csv::num(budget_sum * inv_n),
                                      csv::num(sparsity_sum * inv_n)};
      for (std::size_t l = 0; l < s; ++l) row.push_back(csv::num(mask_sums[l] * inv_n));
      row.push_back(csv::num(static_cast<double>(correct) * inv_n));
      metrics->write_row(row);
    }
  }
  if (cfg.freeze_backbone)
    model.vit.for_each_param([](ad::Parameter& p) { p.requires_grad = true; });
  return res;
}

inline std::vector<std::string> metrics_header(std::size_t s) {
  std::vector<std::string> h = {"epoch", "step", "ce_loss", "budget_loss", "sparsity_loss"};
  for (std::size_t l = 1; l <= s; ++l) h.push_back("mean_mask_b" + std::to_string(l));
  h.push_back("train_acc");
  return h;
}

struct EvalResult {
  double accuracy = 0.0;
  double mean_rho = 0.0;
  double mean_n_alpha = 0.0;
  std::size_t degenerate = 0;
};

// Top-1 accuracy with discretized masks, fresh channel draw per image.
inline EvalResult evaluate(DjsccModel& model, const Dataset& ds, double alpha, double r,
                           const SnrSpec& snr, std::uint64_t eval_seed,
                           std::size_t limit = 0) {
  EvalResult res;
  const std::size_t n = (limit == 0) ? ds.size() : std::min(limit, ds.size());
  if (n == 0) return res;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ChannelDraw draw =
        draw_channel(snr.mode, snr.snr_db, RngStream(eval_seed, "channel/eval", i));
    HardForward fwd =
        djscc_hard_forward(model, to_patches(ds.images[i], model.cfg), alpha, r, draw);
    if (fwd.predicted == ds.labels[i]) ++correct;
    res.mean_rho += fwd.rho;
    res.mean_n_alpha += static_cast<double>(fwd.n_alpha);
    if (fwd.degenerate_payload) ++res.degenerate;
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  res.mean_rho /= static_cast<double>(n);
  res.mean_n_alpha /= static_cast<double>(n);
  return res;
}

// Clean accuracy of the unsplit backbone (no selection, no channel).
inline double evaluate_backbone(DjsccModel& model, const Dataset& ds, std::size_t limit = 0) {
  const std::size_t n = (limit == 0) ? ds.size() : std::min(limit, ds.size());
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  PlainEngine e;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor logits = backbone_forward(e, model, to_patches(ds.images[i], model.cfg));
    if (kernels::argmax_row(logits) == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace tokcom
