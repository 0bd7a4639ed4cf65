// Reverse-mode automatic differentiation on a flat tape.
//
// Ops execute eagerly and record an opcode plus input ids; backward replays
// the recorded order in reverse. A tape and its nodes belong to one thread
// for the duration of a forward/backward pass; distinct tapes are
// independent. Gradients of trainable Parameters accumulate across backward
// calls until the caller zeroes them.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tokcom/tensor.hpp"

namespace tokcom::ad {

// Long-lived named trainable array. Lives outside any tape; forward passes
// lease it onto a tape as a leaf, backward scatters gradients back into grad.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool requires_grad = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Tensor(value.rows(), value.cols()); }
};

struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

class Tape {
  enum class Op : std::uint8_t {
    kLeaf,
    kConstant,
    kMatMul,
    kTranspose,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddRowvec,
    kScaleRows,
    kMulScalar,
    kRelu,
    kSigmoid,
    kGelu,
    kAbs,
    kRowSoftmax,
    kLayerNorm,
    kMeanAll,
    kSumAll,
    kPowc,
    kConcatRows,
    kConcatCols,
    kSliceRows,
    kCrossEntropy,
  };

  struct Node {
    Tensor value;
    Tensor grad;  // empty until backward touches it
    Op op;
    std::vector<std::uint32_t> inputs;
    double aux = 0.0;
    std::vector<std::size_t> aux_idx;  // labels / slice offsets
    bool needs_grad = false;
    Parameter* param = nullptr;
  };

 public:
  Var leaf(const Tensor& v, Parameter* p = nullptr) {
    Var out = push(Op::kLeaf, v, {});
    Node& n = nodes_[out.id];
    n.param = p;
    n.needs_grad = (p == nullptr) ? true : p->requires_grad;
    return out;
  }

  Var constant(Tensor v) { return push(Op::kConstant, std::move(v), {}); }

  const Tensor& value(Var v) const { return node(v).value; }

  // Gradient written by the most recent backward() call; empty if untouched.
  const Tensor& grad(Var v) const { return node(v).grad; }

  std::size_t size() const { return nodes_.size(); }
  void reset() { nodes_.clear(); }

  Var matmul(Var a, Var b) { return push(Op::kMatMul, kernels::matmul(val(a), val(b)), {a, b}); }
  Var transpose(Var a) { return push(Op::kTranspose, kernels::transpose(val(a)), {a}); }
  Var add(Var a, Var b) { return push(Op::kAdd, kernels::add(val(a), val(b)), {a, b}); }
  Var sub(Var a, Var b) { return push(Op::kSub, kernels::sub(val(a), val(b)), {a, b}); }
  Var mul(Var a, Var b) { return push(Op::kMul, kernels::mul(val(a), val(b)), {a, b}); }

  Var scale(Var a, double c) {
    Var out = push(Op::kScale, kernels::scale(val(a), c), {a});
    nodes_[out.id].aux = c;
    return out;
  }

  Var add_rowvec(Var m, Var row) {
    return push(Op::kAddRowvec, kernels::add_rowvec(val(m), val(row)), {m, row});
  }
  Var scale_rows(Var m, Var col) {
    return push(Op::kScaleRows, kernels::scale_rows(val(m), val(col)), {m, col});
  }
  Var mul_scalar(Var m, Var s) {
    return push(Op::kMulScalar, kernels::mul_scalar(val(m), val(s)), {m, s});
  }

  Var relu(Var a) { return push(Op::kRelu, kernels::relu(val(a)), {a}); }
  Var sigmoid(Var a) { return push(Op::kSigmoid, kernels::sigmoid(val(a)), {a}); }
  Var gelu(Var a) { return push(Op::kGelu, kernels::gelu(val(a)), {a}); }
  Var abs(Var a) { return push(Op::kAbs, kernels::abs_t(val(a)), {a}); }
  Var row_softmax(Var a) { return push(Op::kRowSoftmax, kernels::row_softmax(val(a)), {a}); }

  Var layer_norm_rows(Var x, Var gain, Var offset) {
    return push(Op::kLayerNorm, kernels::layer_norm_rows(val(x), val(gain), val(offset)),
                {x, gain, offset});
  }

  Var mean_all(Var a) { return push(Op::kMeanAll, kernels::mean_all(val(a)), {a}); }
  Var sum_all(Var a) { return push(Op::kSumAll, kernels::sum_all(val(a)), {a}); }

  Var powc(Var a, double expo) {
    Var out = push(Op::kPowc, kernels::powc(val(a), expo), {a});
    nodes_[out.id].aux = expo;
    return out;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    std::vector<Tensor> vs;
    vs.reserve(parts.size());
    for (Var p : parts) vs.push_back(val(p));
    return push(Op::kConcatRows, kernels::concat_rows(vs), parts);
  }

  Var concat_cols(const std::vector<Var>& parts) {
    std::vector<Tensor> vs;
    vs.reserve(parts.size());
    for (Var p : parts) vs.push_back(val(p));
    return push(Op::kConcatCols, kernels::concat_cols(vs), parts);
  }

  Var slice_rows(Var a, std::size_t begin, std::size_t count) {
    Var out = push(Op::kSliceRows, kernels::slice_rows(val(a), begin, count), {a});
    nodes_[out.id].aux_idx = {begin, count};
    return out;
  }

  Var cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
    Var out = push(Op::kCrossEntropy, kernels::cross_entropy(val(logits), labels), {logits});
    nodes_[out.id].aux_idx = labels;
    return out;
  }

  // Reverse sweep from `out`, seeding with `seed` (same shape as out's value).
  // Node gradients are rebuilt from scratch each call; Parameter gradients
  // accumulate across calls.
  void backward(Var out, const Tensor& seed) {
    if (nodes_.empty()) throw std::logic_error("backward: empty tape (no forward recorded)");
    if (!out.valid() || out.id >= nodes_.size())
      throw std::logic_error("backward: output var does not belong to this tape");
    if (!seed.same_shape(nodes_[out.id].value))
      throw std::invalid_argument("backward: seed shape " + seed.shape_str() +
                                  " does not match output " + nodes_[out.id].value.shape_str());
    for (Node& n : nodes_) n.grad = Tensor();
    nodes_[out.id].grad = seed;

    for (std::uint32_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      propagate(n);
    }
    for (Node& n : nodes_)
      if (n.param != nullptr && n.param->requires_grad && !n.grad.empty())
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
  }

  void backward(Var out) {
    const Tensor& v = value(out);
    backward(out, Tensor::ones(v.rows(), v.cols()));
  }

 private:
  std::vector<Node> nodes_;

  const Node& node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw std::logic_error("invalid tape var");
    return nodes_[v.id];
  }
  const Tensor& val(Var v) const { return node(v).value; }

  Var push(Op op, Tensor value, const std::vector<Var>& inputs) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.inputs.reserve(inputs.size());
    for (Var in : inputs) {
      if (!in.valid() || in.id >= nodes_.size()) throw std::logic_error("op input not on tape");
      n.inputs.push_back(in.id);
      n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  void accum(std::uint32_t id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    for (std::size_t k = 0; k < g.size(); ++k) n.grad[k] += g[k];
  }

  void propagate(Node& n) {
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kMatMul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        if (nodes_[n.inputs[0]].needs_grad)
          accum(n.inputs[0], kernels::matmul(g, kernels::transpose(b)));
        if (nodes_[n.inputs[1]].needs_grad)
          accum(n.inputs[1], kernels::matmul(kernels::transpose(a), g));
        break;
      }
      case Op::kTranspose:
        accum(n.inputs[0], kernels::transpose(g));
        break;
      case Op::kAdd:
        accum(n.inputs[0], g);
        accum(n.inputs[1], g);
        break;
      case Op::kSub:
        accum(n.inputs[0], g);
        accum(n.inputs[1], kernels::scale(g, -1.0));
        break;
      case Op::kMul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        if (nodes_[n.inputs[0]].needs_grad) accum(n.inputs[0], kernels::mul(g, b));
        if (nodes_[n.inputs[1]].needs_grad) accum(n.inputs[1], kernels::mul(g, a));
        break;
      }
      case Op::kScale:
        accum(n.inputs[0], kernels::scale(g, n.aux));
        break;
      case Op::kAddRowvec: {
        accum(n.inputs[0], g);
        if (nodes_[n.inputs[1]].needs_grad) {
          Tensor gr(1, g.cols());
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g.at(i, j);
          accum(n.inputs[1], gr);
        }
        break;
      }
      case Op::kScaleRows: {
        const Tensor& m = nodes_[n.inputs[0]].value;
        const Tensor& col = nodes_[n.inputs[1]].value;
        if (nodes_[n.inputs[0]].needs_grad) accum(n.inputs[0], kernels::scale_rows(g, col));
        if (nodes_[n.inputs[1]].needs_grad) {
          Tensor gc(m.rows(), 1);
          for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) gc[i] += g.at(i, j) * m.at(i, j);
          accum(n.inputs[1], gc);
        }
        break;
      }
      case Op::kMulScalar: {
        const Tensor& m = nodes_[n.inputs[0]].value;
        const Tensor& s = nodes_[n.inputs[1]].value;
        if (nodes_[n.inputs[0]].needs_grad) accum(n.inputs[0], kernels::scale(g, s[0]));
        if (nodes_[n.inputs[1]].needs_grad) {
          double acc = 0.0;
          for (std::size_t k = 0; k < m.size(); ++k) acc += g[k] * m[k];
          accum(n.inputs[1], Tensor::scalar(acc));
        }
        break;
      }
      case Op::kRelu: {
        // Subgradient at 0 is 0.
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor gx = g;
        for (std::size_t k = 0; k < gx.size(); ++k)
          if (x[k] <= 0.0) gx[k] = 0.0;
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kSigmoid: {
        Tensor gx = g;
        for (std::size_t k = 0; k < gx.size(); ++k) gx[k] *= n.value[k] * (1.0 - n.value[k]);
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kGelu: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor gx = g;
        const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
        for (std::size_t k = 0; k < gx.size(); ++k) {
          double cdf = 0.5 * (1.0 + std::erf(x[k] * inv_sqrt2));
          double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[k] * x[k]);
          gx[k] *= cdf + x[k] * pdf;
        }
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kAbs: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor gx = g;
        for (std::size_t k = 0; k < gx.size(); ++k)
          gx[k] *= (x[k] > 0.0) ? 1.0 : (x[k] < 0.0 ? -1.0 : 0.0);
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kRowSoftmax: {
        const Tensor& y = n.value;
        Tensor gx(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j)
            gx.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
        }
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        const Tensor& gain = nodes_[n.inputs[1]].value;
        const std::size_t d = x.cols();
        Tensor gx(x.rows(), d), ggain(1, d), goff(1, d);
        for (std::size_t i = 0; i < x.rows(); ++i) {
          double mean = 0.0;
          for (std::size_t j = 0; j < d; ++j) mean += x.at(i, j);
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            double c = x.at(i, j) - mean;
            var += c * c;
          }
          var /= static_cast<double>(d);
          double inv = 1.0 / std::sqrt(var + kernels::kLayerNormEps);
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            double xhat = (x.at(i, j) - mean) * inv;
            double dxhat = g.at(i, j) * gain[j];
            ggain[j] += g.at(i, j) * xhat;
            goff[j] += g.at(i, j);
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat;
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            double xhat = (x.at(i, j) - mean) * inv;
            double dxhat = g.at(i, j) * gain[j];
            gx.at(i, j) = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
          }
        }
        accum(n.inputs[0], gx);
        if (nodes_[n.inputs[1]].needs_grad) accum(n.inputs[1], ggain);
        if (nodes_[n.inputs[2]].needs_grad) accum(n.inputs[2], goff);
        break;
      }
      case Op::kMeanAll: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor gx(x.rows(), x.cols(), g[0] / static_cast<double>(x.size()));
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kSumAll: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor gx(x.rows(), x.cols(), g[0]);
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kPowc: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor gx = g;
        for (std::size_t k = 0; k < gx.size(); ++k)
          gx[k] *= n.aux * std::pow(x[k], n.aux - 1.0);
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kConcatRows: {
        std::size_t r = 0;
        for (std::uint32_t in : n.inputs) {
          const Tensor& part = nodes_[in].value;
          if (nodes_[in].needs_grad) accum(in, kernels::slice_rows(g, r, part.rows()));
          r += part.rows();
        }
        break;
      }
      case Op::kConcatCols: {
        std::size_t c = 0;
        for (std::uint32_t in : n.inputs) {
          const Tensor& part = nodes_[in].value;
          if (nodes_[in].needs_grad) {
            Tensor gp(part.rows(), part.cols());
            for (std::size_t i = 0; i < part.rows(); ++i)
              for (std::size_t j = 0; j < part.cols(); ++j) gp.at(i, j) = g.at(i, c + j);
            accum(in, gp);
          }
          c += part.cols();
        }
        break;
      }
      case Op::kSliceRows: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor gx(x.rows(), x.cols());
        std::size_t begin = n.aux_idx[0];
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gx.at(begin + i, j) = g.at(i, j);
        accum(n.inputs[0], gx);
        break;
      }
      case Op::kCrossEntropy: {
        const Tensor& logits = nodes_[n.inputs[0]].value;
        Tensor gl = kernels::row_softmax(logits);
        double scale = g[0] / static_cast<double>(logits.rows());
        for (std::size_t i = 0; i < logits.rows(); ++i) {
          gl.at(i, n.aux_idx[i]) -= 1.0;
          for (std::size_t j = 0; j < logits.cols(); ++j) gl.at(i, j) *= scale;
        }
        accum(n.inputs[0], gl);
        break;
      }
    }
  }
};

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool finite = true;

  bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

// Central-difference check of an analytic gradient. `fn(x, grad_out)` returns
// the scalar value at x and, when grad_out is non-null, writes the analytic
// gradient into it. Error per coordinate is
// |analytic - central| / max(1, |central|).
inline FdResult finite_difference_check(
    const std::function<double(const std::vector<double>&, std::vector<double>*)>& fn,
    std::vector<double> point, double step = 1e-5) {
  FdResult res;
  std::vector<double> analytic(point.size(), 0.0);
  double base = fn(point, &analytic);
  if (!std::isfinite(base)) {
    res.finite = false;
    return res;
  }
  for (std::size_t i = 0; i < point.size(); ++i) {
    double saved = point[i];
    point[i] = saved + step;
    double fp = fn(point, nullptr);
    point[i] = saved - step;
    double fm = fn(point, nullptr);
    point[i] = saved;
    double central = (fp - fm) / (2.0 * step);
    if (!std::isfinite(central) || !std::isfinite(analytic[i])) {
      res.finite = false;
      res.worst_index = i;
      return res;
    }
    double err = std::fabs(analytic[i] - central) / std::max(1.0, std::fabs(central));
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = i;
    }
  }
  return res;
}

}  // namespace tokcom::ad
