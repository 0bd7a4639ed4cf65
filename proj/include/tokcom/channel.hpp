// Transmission stage: per-ratio complex compression autoencoders, power
// normalization, channel models (noiseless / AWGN / slow fading) and SNR
// bookkeeping. Symbols are kept as separate real and imaginary tensors so the
// whole path stays differentiable on the real-valued tape.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/engine.hpp"
#include "tokcom/rng.hpp"

namespace tokcom {

struct CodecParams {
  double ratio = 0.0;
  std::size_t out_dim = 0;  // o_r complex features per token
  ad::Parameter re_w1, re_b1, re_w2, re_b2;  // c_R: d -> d -> o_r
  ad::Parameter im_w1, im_b1, im_w2, im_b2;  // c_I: d -> d -> o_r
  ad::Parameter de_w1, de_b1, de_w2, de_b2;  // c_D: 2*o_r -> d -> d

  // Fan-in-scaled init keeps pre-normalization symbol energy near one, which
  // keeps the power-normalization factor well conditioned from the start.
  void init_params(double r, std::size_t d, RngStream& rng) {
    ratio = r;
    out_dim = symbol_dim(r, d);
    const std::string p = "codec.r" + std::to_string(r) + ".";
    auto lin = [&](const std::string& name, std::size_t in, std::size_t out, ad::Parameter& w,
                   ad::Parameter& b, double gain) {
      double stddev = std::sqrt(gain / static_cast<double>(in));
      w = ad::Parameter(p + name + "_w", init::gaussian(in, out, rng, stddev));
      b = ad::Parameter(p + name + "_b", Tensor(1, out));
    };
    lin("re1", d, d, re_w1, re_b1, 2.0);
    lin("re2", d, out_dim, re_w2, re_b2, 1.0);
    lin("im1", d, d, im_w1, im_b1, 2.0);
    lin("im2", d, out_dim, im_w2, im_b2, 1.0);
    lin("de1", 2 * out_dim, d, de_w1, de_b1, 2.0);
    lin("de2", d, d, de_w2, de_b2, 1.0);
  }

  static std::size_t symbol_dim(double r, std::size_t d) {
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(r * static_cast<double>(d))));
  }

  void for_each_param(const std::function<void(ad::Parameter&)>& fn) {
    fn(re_w1);
    fn(re_b1);
    fn(re_w2);
    fn(re_b2);
    fn(im_w1);
    fn(im_b1);
    fn(im_w2);
    fn(im_b2);
    fn(de_w1);
    fn(de_b1);
    fn(de_w2);
    fn(de_b2);
  }
};

struct CodecBank {
  std::vector<CodecParams> codecs;

  void init_params(const std::vector<double>& r_grid, std::size_t d, RngStream& rng) {
    codecs.clear();
    codecs.resize(r_grid.size());
    for (std::size_t i = 0; i < r_grid.size(); ++i) codecs[i].init_params(r_grid[i], d, rng);
  }

  CodecParams& at_ratio(double r) {
    for (CodecParams& c : codecs)
      if (std::fabs(c.ratio - r) < 1e-12) return c;
    throw std::invalid_argument("CodecBank: ratio " + std::to_string(r) + " not in bank");
  }

  std::vector<double> ratios() const {
    std::vector<double> out;
    out.reserve(codecs.size());
    for (const CodecParams& c : codecs) out.push_back(c.ratio);
    return out;
  }

  void for_each_param(const std::function<void(ad::Parameter&)>& fn) {
    for (CodecParams& c : codecs) c.for_each_param(fn);
  }
};

enum class ChannelMode { kNoiseless, kAwgn, kSlowFading };

inline const char* channel_mode_name(ChannelMode m) {
  switch (m) {
    case ChannelMode::kNoiseless: return "noiseless";
    case ChannelMode::kAwgn: return "awgn";
    case ChannelMode::kSlowFading: return "slow_fading";
  }
  return "?";
}

// One channel realization, held constant for a single inference task. The
// noise stream is part of the draw so identical draws replay identical noise.
struct ChannelDraw {
  ChannelMode mode = ChannelMode::kNoiseless;
  double h_re = 1.0, h_im = 0.0;
  double noise_var = 0.0;  // per complex symbol; Re and Im each get var/2
  RngStream noise_rng;

  double h_abs2() const { return h_re * h_re + h_im * h_im; }
};

// Noise variance for a requested per-symbol SNR (dB) at unit average signal
// power. For slow fading, h ~ CN(0, 1) per task and snr_db is the average.
inline ChannelDraw draw_channel(ChannelMode mode, double snr_db, RngStream rng) {
  ChannelDraw d;
  d.mode = mode;
  switch (mode) {
    case ChannelMode::kNoiseless:
      d.noise_var = 0.0;
      break;
    case ChannelMode::kAwgn:
      d.noise_var = std::pow(10.0, -snr_db / 10.0);
      break;
    case ChannelMode::kSlowFading: {
      d.h_re = rng.normal() / std::sqrt(2.0);
      d.h_im = rng.normal() / std::sqrt(2.0);
      d.noise_var = std::pow(10.0, -snr_db / 10.0);
      break;
    }
  }
  if (d.noise_var < 0.0) throw std::invalid_argument("draw_channel: negative noise variance");
  d.noise_rng = rng;
  return d;
}

template <class E>
struct SymbolBlock {
  typename E::M re, im;  // n_alpha x o_r each
  bool degenerate = false;
};

// Two-layer feedforward with a ReLU hidden activation.
template <class E>
typename E::M feedforward(E& e, typename E::M x, ad::Parameter& w1, ad::Parameter& b1,
                          ad::Parameter& w2, ad::Parameter& b2) {
  auto h = e.relu(e.add_rowvec(e.matmul(x, e.param(w1)), e.param(b1)));
  return e.add_rowvec(e.matmul(h, e.param(w2)), e.param(b2));
}

// Scales the flattened block to satisfy (1/q)||s||^2 = 1 exactly. A zero
// payload cannot be normalized: it passes through unchanged with the
// degenerate flag set.
template <class E>
SymbolBlock<E> power_normalize(E& e, SymbolBlock<E> s) {
  const double q = static_cast<double>(e.val(s.re).size());
  if (q < 1.0) throw std::invalid_argument("power_normalize: empty payload");
  auto energy = e.add(e.sum_all(e.mul(s.re, s.re)), e.sum_all(e.mul(s.im, s.im)));
  if (e.val(energy).value() == 0.0) {
    s.degenerate = true;
    return s;
  }
  auto factor = e.powc(e.scale(energy, 1.0 / q), -0.5);
  s.re = e.mul_scalar(s.re, factor);
  s.im = e.mul_scalar(s.im, factor);
  return s;
}

// C_E: per token, c_R produces the real part and c_I the imaginary part;
// the flattened block is then power-normalized.
template <class E>
SymbolBlock<E> encode_symbols(E& e, typename E::M selected_tokens, CodecParams& codec) {
  SymbolBlock<E> s;
  s.re = feedforward(e, selected_tokens, codec.re_w1, codec.re_b1, codec.re_w2, codec.re_b2);
  s.im = feedforward(e, selected_tokens, codec.im_w1, codec.im_b1, codec.im_w2, codec.im_b2);
  return power_normalize(e, s);
}

// s' = h s + n with n_i ~ CN(0, noise_var) i.i.d. Noise is drawn row-major,
// Re then Im per symbol, from the draw's stream.
template <class E>
SymbolBlock<E> channel_apply(E& e, SymbolBlock<E> s, ChannelDraw& draw) {
  if (draw.mode == ChannelMode::kNoiseless) return s;
  const Tensor& re_v = e.val(s.re);
  const std::size_t rows = re_v.rows(), cols = re_v.cols();
  SymbolBlock<E> out;
  out.degenerate = s.degenerate;
  auto hs_re = e.sub(e.scale(s.re, draw.h_re), e.scale(s.im, draw.h_im));
  auto hs_im = e.add(e.scale(s.im, draw.h_re), e.scale(s.re, draw.h_im));
  if (draw.noise_var > 0.0) {
    const double sd = std::sqrt(draw.noise_var / 2.0);
    Tensor n_re(rows, cols), n_im(rows, cols);
    for (std::size_t k = 0; k < n_re.size(); ++k) {
      n_re[k] = sd * draw.noise_rng.normal();
      n_im[k] = sd * draw.noise_rng.normal();
    }
    hs_re = e.add(hs_re, e.constant(std::move(n_re)));
    hs_im = e.add(hs_im, e.constant(std::move(n_im)));
  }
  out.re = hs_re;
  out.im = hs_im;
  return out;
}

// C_D: concatenate [Re; Im] per token and run the decoder net back to d.
template <class E>
typename E::M decode_symbols(E& e, SymbolBlock<E> s, CodecParams& codec) {
  if (e.val(s.re).cols() != codec.out_dim)
    throw std::invalid_argument("decode_symbols: symbol dim " +
                                std::to_string(e.val(s.re).cols()) + " does not match ratio " +
                                std::to_string(codec.ratio));
  auto z = e.concat_cols({s.re, s.im});
  return feedforward(e, z, codec.de_w1, codec.de_b1, codec.de_w2, codec.de_b2);
}

// rho = q / p = (n_alpha * o_r) / p.
inline double compression_ratio(std::size_t n_alpha, std::size_t o_r, std::size_t p) {
  if (p == 0) throw std::invalid_argument("compression_ratio: p must be positive");
  return static_cast<double>(n_alpha * o_r) / static_cast<double>(p);
}

// Per-symbol SNR in dB: |h|^2 (||s||^2 / q) / noise_var. Infinite for a
// noise-free draw.
inline double measured_snr_db(const ChannelDraw& draw, const Tensor& re, const Tensor& im) {
  if (draw.noise_var == 0.0) return std::numeric_limits<double>::infinity();
  double energy = 0.0;
  for (std::size_t k = 0; k < re.size(); ++k) energy += re[k] * re[k] + im[k] * im[k];
  const double q = static_cast<double>(re.size());
  return 10.0 * std::log10(draw.h_abs2() * (energy / q) / draw.noise_var);
}

}  // namespace tokcom
