// Dense row-major 2-D tensor of doubles plus the numeric kernels shared by
// the autodiff tape and the plain (inference) evaluation path.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tokcom {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data_[0] = v;
    return t;
  }
  static Tensor ones(std::size_t rows, std::size_t cols) { return Tensor(rows, cols, 1.0); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  // Value of a 1x1 tensor.
  double value() const {
    if (size() != 1) throw std::logic_error("Tensor::value: tensor is not scalar");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

namespace kernels {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

inline CMap emap(const Tensor& t) {
  return CMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline Map emap(Tensor& t) {
  return Map(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] inline void shape_fail(const std::string& op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(op + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Tensor out(a.rows(), b.cols());
  emap(out).noalias() = emap(a) * emap(b);
  return out;
}

inline Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  emap(out) = emap(a).transpose();
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("add", a, b);
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b[k];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("sub", a, b);
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b[k];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("mul", a, b);
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b[k];
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= c;
  return out;
}

// m (r x c) + row (1 x c), broadcast over rows.
inline Tensor add_rowvec(const Tensor& m, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) shape_fail("add_rowvec", m, row);
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) += row[j];
  return out;
}

// m (r x c) * col (r x 1), each row i scaled by col[i].
inline Tensor scale_rows(const Tensor& m, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != m.rows()) shape_fail("scale_rows", m, col);
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) *= col[i];
  return out;
}

// m * s with s a 1x1 tensor.
inline Tensor mul_scalar(const Tensor& m, const Tensor& s) {
  if (s.size() != 1) shape_fail("mul_scalar", m, s);
  return scale(m, s[0]);
}

inline Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = out[k] > 0.0 ? out[k] : 0.0;
  return out;
}

inline Tensor sigmoid(const Tensor& a) {
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = 1.0 / (1.0 + std::exp(-out[k]));
  return out;
}

inline Tensor gelu(const Tensor& a) {
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) {
    double x = out[k];
    out[k] = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
  }
  return out;
}

inline Tensor abs_t(const Tensor& a) {
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::fabs(out[k]);
  return out;
}

// Row-wise softmax with max subtraction.
inline Tensor row_softmax(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = out.at(i, 0);
    for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, out.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      double e = std::exp(out.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) /= sum;
  }
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

// Row-wise layer norm: per row, (x - mean) / sqrt(var + eps) * gain + offset.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& offset) {
  if (gain.rows() != 1 || gain.cols() != x.cols()) shape_fail("layer_norm_rows(gain)", x, gain);
  if (offset.rows() != 1 || offset.cols() != x.cols())
    shape_fail("layer_norm_rows(offset)", x, offset);
  Tensor out(x.rows(), x.cols());
  const std::size_t d = x.cols();
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
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j)
      out.at(i, j) = (x.at(i, j) - mean) * inv * gain[j] + offset[j];
  }
  return out;
}

inline Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k];
  return Tensor::scalar(s / static_cast<double>(a.size()));
}

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k];
  return Tensor::scalar(s);
}

// Elementwise power with constant exponent.
inline Tensor powc(const Tensor& a, double expo) {
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::pow(out[k], expo);
  return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  std::size_t cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts[0], p);
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t r = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) out.at(r + i, j) = p.at(i, j);
    r += p.rows();
  }
  return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  std::size_t rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts[0], p);
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t c = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out.at(i, c + j) = p.at(i, j);
    c += p.cols();
  }
  return out;
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows())
    throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") exceeds " + a.shape_str());
  Tensor out(count, a.cols());
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(begin + i, j);
  return out;
}

// Mean negative log-likelihood over rows; one label per row.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (labels.size() != logits.rows())
    throw std::invalid_argument("cross_entropy: labels size " + std::to_string(labels.size()) +
                                " vs rows " + std::to_string(logits.rows()));
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (labels[i] >= logits.cols()) throw std::invalid_argument("cross_entropy: label out of range");
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits.at(i, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) lse += std::exp(logits.at(i, j) - mx);
    total += std::log(lse) + mx - logits.at(i, labels[i]);
  }
  return Tensor::scalar(total / static_cast<double>(logits.rows()));
}

inline std::size_t argmax_row(const Tensor& logits, std::size_t row = 0) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.cols(); ++j)
    if (logits.at(row, j) > logits.at(row, best)) best = j;
  return best;
}

}  // namespace kernels
}  // namespace tokcom
