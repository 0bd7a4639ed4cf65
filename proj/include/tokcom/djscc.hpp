// The assembled token-based DJSCC model: split ViT backbone, budget token,
// per-block selectors, codec bank. Two forward paths share the block math:
//
//  - soft (training): every token stays in the sequence scaled by its mask
//    value, the transmitted rows are scaled by the final mask, and the whole
//    pipeline is recorded on an autodiff tape;
//  - hard (inference): tokens whose mask hits zero are physically removed
//    before each block, retained rows are transmitted unscaled, and retained
//    indices travel as error-free side information.
#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "tokcom/channel.hpp"
#include "tokcom/token_select.hpp"
#include "tokcom/vit.hpp"

namespace tokcom {

struct DjsccModel {
  ModelConfig cfg;
  VitParams vit;
  BudgetPair budget;
  std::vector<SelectorParams> selectors;  // one per encoder block
  CodecBank bank;

  void init_params(const ModelConfig& config, const std::vector<double>& r_grid,
                   RngStream rng) {
    cfg = config;
    cfg.validate();
    vit.cfg = cfg;
    vit.init_params(rng);
    budget.init_params(cfg.embed_dim, rng);
    selectors.clear();
    selectors.resize(cfg.split);
    for (std::size_t l = 0; l < cfg.split; ++l)
      selectors[l].init_params(l + 1, cfg.embed_dim, rng);
    bank.init_params(r_grid, cfg.embed_dim, rng);
  }

  void for_each_param(const std::function<void(ad::Parameter&)>& fn) {
    vit.for_each_param(fn);
    fn(budget.low);
    fn(budget.high);
    for (SelectorParams& s : selectors) s.for_each_param(fn);
    bank.for_each_param(fn);
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for_each_param([&](ad::Parameter& p) { n += p.value.size(); });
    return n;
  }
};

// Unsplit forward of the full backbone (budget row present, no selection, no
// channel). Used for pretraining and as the classifier of digital baselines.
template <class E>
typename E::M backbone_forward(E& e, DjsccModel& m, const Tensor& patch_matrix,
                               double alpha = 1.0) {
  auto b0 = make_budget_token(e, alpha, m.budget);
  auto h = patch_embed(e, patch_matrix, m.vit, b0);
  h = run_blocks(e, h, m.vit, 0, m.cfg.blocks);
  return classify(e, h, m.cfg.class_index(), m.vit);
}

struct SoftForward {
  ad::Var loss, ce, budget_loss, sparsity_loss;
  ad::Var logits;
  ad::Var final_mask;                    // (n+1) x 1 mask after block s
  std::vector<ad::Var> block_mean_masks; // mean mask per adaptive block
  bool degenerate_payload = false;
};

// Training-mode forward of f_jscc(x, alpha): selection before every encoder
// block, final-mask-scaled rows (budget row excluded) through the codec and
// channel, decoder blocks, class-token logits, and the penalized loss
// CE + lambda_s * B(s) + lambda_r * R.
inline SoftForward djscc_soft_forward(ad::Tape& tape, DjsccModel& m, const Tensor& patch_matrix,
                                      std::size_t label, const BudgetSpec& spec, double r,
                                      ChannelDraw draw) {
  spec.validate();
  TapeEngine e{tape};
  CodecParams& codec = m.bank.at_ratio(r);
  const std::size_t s = m.cfg.split;
  const std::size_t n = m.cfg.n_tokens();  // patches + class

  auto b0 = make_budget_token(e, spec.alpha, m.budget);
  auto h = patch_embed(e, patch_matrix, m.vit, b0);
  auto mask = e.constant(Tensor::ones(m.cfg.seq_len(), 1));

  SoftForward out;
  std::vector<ad::Var> penalties;
  for (std::size_t l = 0; l < s; ++l) {
    auto step = apply_selection(e, h, mask, m.selectors[l]);
    mask = step.mask;
    out.block_mean_masks.push_back(mean_mask(e, mask));
    penalties.push_back(block_budget_penalty(e, mask, spec));
    h = block_forward(e, step.masked_tokens, m.vit.blocks[l]);
  }
  out.final_mask = mask;

  // Transmit patch and class rows of H^s, scaled by the final mask; the
  // budget token stops at the encoder.
  auto tx = e.scale_rows(e.slice_rows(h, 0, n), e.slice_rows(mask, 0, n));
  auto sym = encode_symbols(e, tx, codec);
  out.degenerate_payload = sym.degenerate;
  sym = channel_apply(e, sym, draw);
  auto hd = decode_symbols(e, sym, codec);
  hd = run_blocks(e, hd, m.vit, s, m.cfg.blocks);

  out.logits = classify(e, hd, n - 1, m.vit);
  out.ce = tape.cross_entropy(out.logits, {label});
  out.budget_loss = penalties[s - 1];
  out.sparsity_loss = sparsity_regularizer(e, penalties, s);
  out.loss = tape.add(out.ce, tape.add(tape.scale(out.budget_loss, spec.lambda_s),
                                       tape.scale(out.sparsity_loss, spec.lambda_r)));
  return out;
}

struct HardForward {
  std::size_t predicted = 0;
  Tensor logits;
  std::vector<std::size_t> retained;     // indices after block s, incl. class and budget
  std::vector<std::size_t> tx_indices;   // transmitted rows: retained minus the budget token
  std::size_t n_alpha = 0;               // transmitted token count
  double rho = 0.0;
  bool degenerate_payload = false;
  // Full-length mask values per adaptive block (0 for removed rows).
  std::vector<std::vector<double>> block_masks;
};

// Inference-mode forward: discretized masks, tokens physically removed, side
// information (n_alpha, r, indices) assumed error-free.
inline HardForward djscc_hard_forward(DjsccModel& m, const Tensor& patch_matrix, double alpha,
                                      double r, ChannelDraw draw) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("djscc_hard_forward: alpha must lie in (0, 1]");
  PlainEngine e;
  CodecParams& codec = m.bank.at_ratio(r);
  const std::size_t s = m.cfg.split;
  const std::size_t rows = m.cfg.seq_len();
  const std::size_t class_idx = m.cfg.class_index(), budget_idx = m.cfg.budget_index();

  Tensor b0 = kernels::add(kernels::scale(m.budget.high.value, alpha),
                           kernels::scale(m.budget.low.value, 1.0 - alpha));
  Tensor h = patch_embed(e, patch_matrix, m.vit, b0);

  std::vector<std::size_t> active(rows);
  for (std::size_t j = 0; j < rows; ++j) active[j] = j;
  std::vector<double> mask_state(rows, 1.0);

  HardForward out;
  for (std::size_t l = 0; l < s; ++l) {
    SelectorParams& sel = m.selectors[l];
    Tensor budget_row = kernels::slice_rows(h, h.rows() - 1, 1);
    double thr = kernels::sigmoid(kernels::add(kernels::matmul(budget_row, sel.thr_w.value),
                                               sel.thr_b.value))
                     .value();
    std::vector<std::size_t> keep;
    keep.reserve(active.size());
    for (std::size_t pos = 0; pos < active.size(); ++pos) {
      std::size_t j = active[pos];
      if (j == class_idx || j == budget_idx) {
        keep.push_back(pos);
        continue;
      }
      double gate_in = sel.gate_b.value.value();
      for (std::size_t k = 0; k < h.cols(); ++k)
        gate_in += h.at(pos, k) * sel.gate_w.value[k];
      double gate = 1.0 / (1.0 + std::exp(-gate_in));
      double mj = std::max(0.0, gate - thr) * mask_state[j];
      mask_state[j] = mj;
      if (mj > 0.0) keep.push_back(pos);
    }
    if (keep.size() < active.size()) {
      Tensor reduced(keep.size(), h.cols());
      std::vector<std::size_t> next;
      next.reserve(keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        for (std::size_t k = 0; k < h.cols(); ++k) reduced.at(i, k) = h.at(keep[i], k);
        next.push_back(active[keep[i]]);
      }
      h = std::move(reduced);
      active = std::move(next);
    }
    std::vector<double> block_mask(rows, 0.0);
    for (std::size_t j : active) block_mask[j] = (j == class_idx || j == budget_idx)
                                                     ? 1.0
                                                     : mask_state[j];
    out.block_masks.push_back(std::move(block_mask));
    h = block_forward(e, h, m.vit.blocks[l]);
  }

  out.retained = active;
  // Drop the budget row (always the last active index) for transmission.
  std::vector<std::size_t> tx_pos;
  for (std::size_t pos = 0; pos < active.size(); ++pos)
    if (active[pos] != budget_idx) {
      tx_pos.push_back(pos);
      out.tx_indices.push_back(active[pos]);
    }
  Tensor tx(tx_pos.size(), h.cols());
  for (std::size_t i = 0; i < tx_pos.size(); ++i)
    for (std::size_t k = 0; k < h.cols(); ++k) tx.at(i, k) = h.at(tx_pos[i], k);
  out.n_alpha = tx.rows();
  out.rho = compression_ratio(out.n_alpha, codec.out_dim, m.cfg.input_dim());

  auto sym = encode_symbols(e, tx, codec);
  out.degenerate_payload = sym.degenerate;
  sym = channel_apply(e, sym, draw);
  Tensor hd = decode_symbols(e, sym, codec);
  hd = run_blocks(e, hd, m.vit, s, m.cfg.blocks);

  // Side information re-binds positions; the class token is the last
  // transmitted row by index order.
  std::size_t class_pos = 0;
  for (std::size_t i = 0; i < out.tx_indices.size(); ++i)
    if (out.tx_indices[i] == class_idx) class_pos = i;
  out.logits = classify(e, hd, class_pos, m.vit);
  out.predicted = kernels::argmax_row(out.logits);
  return out;
}

}  // namespace tokcom
