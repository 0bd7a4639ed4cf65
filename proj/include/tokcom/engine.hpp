// Two evaluation engines over the same numeric kernels: TapeEngine records
// onto an autodiff tape (training, gradient checks), PlainEngine computes on
// bare tensors (inference). Model code is templated on the engine so the
// forward math is written once.
#pragma once

#include <vector>

#include "tokcom/autodiff.hpp"
#include "tokcom/rng.hpp"
#include "tokcom/tensor.hpp"

namespace tokcom {

namespace init {

inline Tensor gaussian(std::size_t rows, std::size_t cols, RngStream& rng, double stddev = 0.02) {
  Tensor t(rows, cols);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = stddev * rng.normal();
  return t;
}

}  // namespace init

struct TapeEngine {
  ad::Tape& tape;
  using M = ad::Var;

  M param(ad::Parameter& p) { return tape.leaf(p.value, &p); }
  M constant(Tensor v) { return tape.constant(std::move(v)); }
  const Tensor& val(M v) const { return tape.value(v); }

  M matmul(M a, M b) { return tape.matmul(a, b); }
  M transpose(M a) { return tape.transpose(a); }
  M add(M a, M b) { return tape.add(a, b); }
  M sub(M a, M b) { return tape.sub(a, b); }
  M mul(M a, M b) { return tape.mul(a, b); }
  M scale(M a, double c) { return tape.scale(a, c); }
  M add_rowvec(M m, M row) { return tape.add_rowvec(m, row); }
  M scale_rows(M m, M col) { return tape.scale_rows(m, col); }
  M mul_scalar(M m, M s) { return tape.mul_scalar(m, s); }
  M relu(M a) { return tape.relu(a); }
  M sigmoid(M a) { return tape.sigmoid(a); }
  M gelu(M a) { return tape.gelu(a); }
  M abs(M a) { return tape.abs(a); }
  M row_softmax(M a) { return tape.row_softmax(a); }
  M layer_norm_rows(M x, M gain, M offset) { return tape.layer_norm_rows(x, gain, offset); }
  M mean_all(M a) { return tape.mean_all(a); }
  M sum_all(M a) { return tape.sum_all(a); }
  M powc(M a, double expo) { return tape.powc(a, expo); }
  M concat_rows(const std::vector<M>& parts) { return tape.concat_rows(parts); }
  M concat_cols(const std::vector<M>& parts) { return tape.concat_cols(parts); }
  M slice_rows(M a, std::size_t begin, std::size_t count) {
    return tape.slice_rows(a, begin, count);
  }
};

struct PlainEngine {
  using M = Tensor;

  M param(ad::Parameter& p) { return p.value; }
  M constant(Tensor v) { return v; }
  const Tensor& val(const M& v) const { return v; }

  M matmul(const M& a, const M& b) { return kernels::matmul(a, b); }
  M transpose(const M& a) { return kernels::transpose(a); }
  M add(const M& a, const M& b) { return kernels::add(a, b); }
  M sub(const M& a, const M& b) { return kernels::sub(a, b); }
  M mul(const M& a, const M& b) { return kernels::mul(a, b); }
  M scale(const M& a, double c) { return kernels::scale(a, c); }
  M add_rowvec(const M& m, const M& row) { return kernels::add_rowvec(m, row); }
  M scale_rows(const M& m, const M& col) { return kernels::scale_rows(m, col); }
  M mul_scalar(const M& m, const M& s) { return kernels::mul_scalar(m, s); }
  M relu(const M& a) { return kernels::relu(a); }
  M sigmoid(const M& a) { return kernels::sigmoid(a); }
  M gelu(const M& a) { return kernels::gelu(a); }
  M abs(const M& a) { return kernels::abs_t(a); }
  M row_softmax(const M& a) { return kernels::row_softmax(a); }
  M layer_norm_rows(const M& x, const M& gain, const M& offset) {
    return kernels::layer_norm_rows(x, gain, offset);
  }
  M mean_all(const M& a) { return kernels::mean_all(a); }
  M sum_all(const M& a) { return kernels::sum_all(a); }
  M powc(const M& a, double expo) { return kernels::powc(a, expo); }
  M concat_rows(const std::vector<M>& parts) { return kernels::concat_rows(parts); }
  M concat_cols(const std::vector<M>& parts) { return kernels::concat_cols(parts); }
  M slice_rows(const M& a, std::size_t begin, std::size_t count) {
    return kernels::slice_rows(a, begin, count);
  }
};

}  // namespace tokcom
