// Budget-conditioned token selection: budget token construction, per-block
// gate/threshold networks, the recursive multiplicative mask, budget and
// sparsity penalties, and inference-time mask discretization.
#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/engine.hpp"
#include "tokcom/rng.hpp"

namespace tokcom {

struct BudgetPair {
  ad::Parameter low, high;  // b_l and b_h, each 1 x d

  // Wide separation between the two endpoints: the budget row must carry a
  // readable alpha signal through the encoder blocks from the first step.
  void init_params(std::size_t d, RngStream& rng) {
    low = ad::Parameter("budget.low", init::gaussian(1, d, rng, 0.5));
    high = ad::Parameter("budget.high", init::gaussian(1, d, rng, 0.5));
  }
};

// One gate/threshold pair per adaptive block. Biases start at +2/-2 so gates
// open near 1 (0.88) and the threshold near 0 (0.12): the fresh model keeps
// every token. Gate weights get a small random init so gate values spread per
// token from the start; without that spread the budget loss settles on
// uniformly dimming every mask instead of driving the weakest ones to zero,
// and discretization never removes anything.
struct SelectorParams {
  ad::Parameter gate_w, gate_b;  // d x 1, 1 x 1
  ad::Parameter thr_w, thr_b;

  void init_params(std::size_t block, std::size_t d, RngStream& rng) {
    const std::string p = "select.block" + std::to_string(block) + ".";
    gate_w = ad::Parameter(p + "gate_w", init::gaussian(d, 1, rng, 0.1));
    gate_b = ad::Parameter(p + "gate_b", Tensor(1, 1, 0.0));
    thr_w = ad::Parameter(p + "thr_w", init::gaussian(d, 1, rng, 0.1));
    thr_b = ad::Parameter(p + "thr_b", Tensor(1, 1, -2.0));
  }

  void for_each_param(const std::function<void(ad::Parameter&)>& fn) {
    fn(gate_w);
    fn(gate_b);
    fn(thr_w);
    fn(thr_b);
  }
};

// Which mask statistic the budget penalty reads during training. kMean is
// the literal average mask value. With unit-power transmission and
// scale-invariant layer norms, the task loss is indifferent to uniformly
// dimming every mask, so the mean-value budget is satisfiable without
// discarding anything; kCount instead saturates each mask through
// (1 + theta) M / (M + theta), which counts live tokens and can only be
// lowered by driving masks to exact zeros.
enum class BudgetStatistic { kCount, kMean };

struct BudgetSpec {
  double alpha = 1.0;       // target retained fraction, in (0, 1]
  double epsilon = 0.05;    // tolerance band of the budget penalty
  double lambda_s = 2.0;    // budget-loss weight
  double lambda_r = 1.0;    // sparsity-regularizer weight
  BudgetStatistic statistic = BudgetStatistic::kCount;
  double saturation = 0.05;  // theta of the count statistic

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw std::invalid_argument("BudgetSpec: alpha must lie in (0, 1]");
    if (!(epsilon >= 0.0 && epsilon < 1.0))
      throw std::invalid_argument("BudgetSpec: epsilon must lie in [0, 1)");
    if (lambda_s < 0.0 || lambda_r < 0.0)
      throw std::invalid_argument("BudgetSpec: penalty weights must be non-negative");
    if (!(saturation > 0.0))
      throw std::invalid_argument("BudgetSpec: saturation must be positive");
  }
};

// b0 = alpha * b_h + (1 - alpha) * b_l.
template <class E>
typename E::M make_budget_token(E& e, double alpha, BudgetPair& pair) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("make_budget_token: alpha must lie in (0, 1]");
  return e.add(e.scale(e.param(pair.high), alpha), e.scale(e.param(pair.low), 1.0 - alpha));
}

template <class E>
struct SelectionStep {
  typename E::M masked_tokens;  // H with each row scaled by its mask value
  typename E::M mask;           // (n+1) x 1, pinned entries exactly 1
};

// Recursive mask update applied before a block: for each selectable token j,
// M_j = ReLU(gate(h_j) - threshold(budget_row)) * M_prev_j. Class and budget
// rows are pinned to 1.
template <class E>
SelectionStep<E> apply_selection(E& e, typename E::M tokens, typename E::M mask_prev,
                                 SelectorParams& sel) {
  const std::size_t rows = e.val(tokens).rows();
  if (rows < 3)
    throw std::invalid_argument("apply_selection: need at least one selectable token");
  if (e.val(mask_prev).rows() != rows || e.val(mask_prev).cols() != 1)
    throw std::invalid_argument("apply_selection: mask shape " +
                                e.val(mask_prev).shape_str() + " does not match " +
                                std::to_string(rows) + " tokens");
  const std::size_t n_sel = rows - 2;  // all but class and budget
  auto selectable = e.slice_rows(tokens, 0, n_sel);
  auto budget_row = e.slice_rows(tokens, rows - 1, 1);

  auto gates = e.sigmoid(e.add_rowvec(e.matmul(selectable, e.param(sel.gate_w)),
                                      e.param(sel.gate_b)));
  auto threshold = e.sigmoid(e.add(e.matmul(budget_row, e.param(sel.thr_w)),
                                   e.param(sel.thr_b)));
  // gates (n_sel x 1) minus the scalar threshold, broadcast over rows
  auto m_new = e.relu(e.add_rowvec(gates, e.scale(threshold, -1.0)));
  m_new = e.mul(m_new, e.slice_rows(mask_prev, 0, n_sel));
  auto mask = e.concat_rows({m_new, e.constant(Tensor::ones(2, 1))});
  return SelectionStep<E>{e.scale_rows(tokens, mask), mask};
}

// Arithmetic mean over all n+1 entries, pinned ones included.
template <class E>
typename E::M mean_mask(E& e, typename E::M mask) {
  return e.mean_all(mask);
}

// Mean of the saturated masks (1 + theta) M / (M + theta): a smooth count of
// live tokens. Equals 1 for mask 1, 0 for mask 0, and its gradient is
// steepest near zero, so budget pressure hits the weakest tokens hardest.
template <class E>
typename E::M mean_retention(E& e, typename E::M mask, double theta) {
  const Tensor& v = e.val(mask);
  auto denom = e.add(mask, e.constant(Tensor(v.rows(), v.cols(), theta)));
  auto saturated = e.scale(e.mul(mask, e.powc(denom, -1.0)), 1.0 + theta);
  return e.mean_all(saturated);
}

// Per-block budget penalty. The literal mean-value band keeps gradient
// pressure at any mask level; under kCount the live-token count must sit in
// the same band, which a uniformly dimmed mask cannot satisfy, so the
// pressure resolves into exact discards.
template <class E>
typename E::M block_budget_penalty(E& e, typename E::M mask, const BudgetSpec& spec) {
  auto p = budget_penalty(e, mean_mask(e, mask), spec.alpha, spec.epsilon);
  if (spec.statistic == BudgetStatistic::kCount)
    p = e.add(p, budget_penalty(e, mean_retention(e, mask, spec.saturation), spec.alpha,
                                spec.epsilon));
  return p;
}

// B(l) = ReLU(|mean - alpha| - epsilon): zero inside the tolerance band,
// linear outside.
template <class E>
typename E::M budget_penalty(E& e, typename E::M mean, double alpha, double epsilon) {
  auto dev = e.abs(e.add(mean, e.constant(Tensor::scalar(-alpha))));
  return e.relu(e.add(dev, e.constant(Tensor::scalar(-epsilon))));
}

// R = (1/s) * sum_{l=2..s} B(l). `penalties[k]` is B(l) for l = k+1, so the
// sum skips the first entry. Zero by convention when s < 2.
template <class E>
typename E::M sparsity_regularizer(E& e, const std::vector<typename E::M>& penalties,
                                   std::size_t s) {
  if (s < 2 || penalties.size() < 2) return e.constant(Tensor::scalar(0.0));
  auto acc = penalties[1];
  for (std::size_t k = 2; k < penalties.size(); ++k) acc = e.add(acc, penalties[k]);
  return e.scale(acc, 1.0 / static_cast<double>(s));
}

// Indices retained at inference: strictly positive mask entries plus the
// pinned class and budget rows. The count defines n_alpha.
inline std::vector<std::size_t> discretize_mask(const Tensor& mask) {
  if (mask.cols() != 1 || mask.rows() < 2)
    throw std::invalid_argument("discretize_mask: expected a column mask with pinned rows");
  std::vector<std::size_t> retained;
  for (std::size_t j = 0; j + 2 < mask.rows(); ++j)
    if (mask[j] > 0.0) retained.push_back(j);
  retained.push_back(mask.rows() - 2);
  retained.push_back(mask.rows() - 1);
  return retained;
}

}  // namespace tokcom
