// Vision transformer backbone: patch embedding with positional, class and
// budget tokens, pre-norm attention blocks, classification head, and the
// encoder/decoder split.
#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/engine.hpp"
#include "tokcom/rng.hpp"

namespace tokcom {

struct ModelConfig {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t patch = 4;
  std::size_t embed_dim = 64;
  std::size_t heads = 4;
  std::size_t dim_k = 16;
  std::size_t dim_v = 16;
  std::size_t blocks = 6;
  std::size_t split = 3;
  std::size_t classes = 10;
  std::size_t ffn_hidden = 256;

  std::size_t patch_dim() const { return patch * patch * channels; }
  std::size_t patch_tokens() const { return (height / patch) * (width / patch); }
  // n in the token-count sense: patch tokens plus the class token.
  std::size_t n_tokens() const { return patch_tokens() + 1; }
  // Total rows including the budget token.
  std::size_t seq_len() const { return n_tokens() + 1; }
  std::size_t class_index() const { return n_tokens() - 1; }
  std::size_t budget_index() const { return n_tokens(); }
  std::size_t input_dim() const { return channels * height * width; }

  void validate() const {
    if (patch == 0 || height % patch != 0 || width % patch != 0)
      throw std::invalid_argument("ModelConfig: image dims must be divisible by patch size");
    if (!(split > 1 && split < blocks))
      throw std::invalid_argument("ModelConfig: split must satisfy 1 < s < L");
    if (embed_dim == 0 || heads == 0 || dim_k == 0 || dim_v == 0 || classes == 0)
      throw std::invalid_argument("ModelConfig: zero-sized dimension");
  }
};

struct AttentionHeadParams {
  ad::Parameter wq, wk, wv;
};

struct BlockParams {
  ad::Parameter ln1_gain, ln1_offset;
  std::vector<AttentionHeadParams> heads;
  ad::Parameter wo, wo_bias;
  ad::Parameter ln2_gain, ln2_offset;
  ad::Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct VitParams {
  ModelConfig cfg;
  ad::Parameter patch_w, patch_b;
  ad::Parameter pos;  // one row per patch position plus one for the class token
  ad::Parameter cls;
  std::vector<BlockParams> blocks;
  ad::Parameter out_ln_gain, out_ln_offset;
  ad::Parameter head_w, head_b;

  void init_params(RngStream& rng) {
    cfg.validate();
    const std::size_t d = cfg.embed_dim;
    // fan-in scale for the input featurizer; transformer projections use the
    // usual 0.02
    patch_w = ad::Parameter(
        "vit.patch_w",
        init::gaussian(cfg.patch_dim(), d, rng,
                       1.0 / std::sqrt(static_cast<double>(cfg.patch_dim()))));
    patch_b = ad::Parameter("vit.patch_b", Tensor(1, d));
    pos = ad::Parameter("vit.pos", init::gaussian(cfg.patch_tokens() + 1, d, rng));
    cls = ad::Parameter("vit.cls", init::gaussian(1, d, rng));
    blocks.clear();
    blocks.resize(cfg.blocks);
    for (std::size_t l = 0; l < cfg.blocks; ++l) {
      BlockParams& b = blocks[l];
      const std::string p = "vit.block" + std::to_string(l) + ".";
      b.ln1_gain = ad::Parameter(p + "ln1_gain", Tensor::ones(1, d));
      b.ln1_offset = ad::Parameter(p + "ln1_offset", Tensor(1, d));
      b.heads.resize(cfg.heads);
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::string hp = p + "head" + std::to_string(h) + ".";
        b.heads[h].wq = ad::Parameter(hp + "wq", init::gaussian(d, cfg.dim_k, rng));
        b.heads[h].wk = ad::Parameter(hp + "wk", init::gaussian(d, cfg.dim_k, rng));
        b.heads[h].wv = ad::Parameter(hp + "wv", init::gaussian(d, cfg.dim_v, rng));
      }
      b.wo = ad::Parameter(p + "wo", init::gaussian(cfg.heads * cfg.dim_v, d, rng));
      b.wo_bias = ad::Parameter(p + "wo_bias", Tensor(1, d));
      b.ln2_gain = ad::Parameter(p + "ln2_gain", Tensor::ones(1, d));
      b.ln2_offset = ad::Parameter(p + "ln2_offset", Tensor(1, d));
      b.ffn_w1 = ad::Parameter(p + "ffn_w1", init::gaussian(d, cfg.ffn_hidden, rng));
      b.ffn_b1 = ad::Parameter(p + "ffn_b1", Tensor(1, cfg.ffn_hidden));
      b.ffn_w2 = ad::Parameter(p + "ffn_w2", init::gaussian(cfg.ffn_hidden, d, rng));
      b.ffn_b2 = ad::Parameter(p + "ffn_b2", Tensor(1, d));
    }
    out_ln_gain = ad::Parameter("vit.out_ln_gain", Tensor::ones(1, d));
    out_ln_offset = ad::Parameter("vit.out_ln_offset", Tensor(1, d));
    head_w = ad::Parameter("vit.head_w", init::gaussian(d, cfg.classes, rng));
    head_b = ad::Parameter("vit.head_b", Tensor(1, cfg.classes));
  }

  void for_each_param(const std::function<void(ad::Parameter&)>& fn) {
    fn(patch_w);
    fn(patch_b);
    fn(pos);
    fn(cls);
    for (BlockParams& b : blocks) {
      fn(b.ln1_gain);
      fn(b.ln1_offset);
      for (AttentionHeadParams& h : b.heads) {
        fn(h.wq);
        fn(h.wk);
        fn(h.wv);
      }
      fn(b.wo);
      fn(b.wo_bias);
      fn(b.ln2_gain);
      fn(b.ln2_offset);
      fn(b.ffn_w1);
      fn(b.ffn_b1);
      fn(b.ffn_w2);
      fn(b.ffn_b2);
    }
    fn(out_ln_gain);
    fn(out_ln_offset);
    fn(head_w);
    fn(head_b);
  }
};

// Flattens an HWC uint8-style image (already scaled to doubles) into the
// patch matrix: one row per patch, values ordered (y, x, channel) within the
// patch, patches scanned row-major.
inline Tensor patchify(const std::vector<double>& hwc, const ModelConfig& cfg) {
  if (hwc.size() != cfg.input_dim())
    throw std::invalid_argument("patchify: image size " + std::to_string(hwc.size()) +
                                " does not match config " + std::to_string(cfg.input_dim()));
  const std::size_t P = cfg.patch, C = cfg.channels, W = cfg.width;
  const std::size_t py = cfg.height / P, px = cfg.width / P;
  Tensor out(py * px, cfg.patch_dim());
  for (std::size_t ty = 0; ty < py; ++ty)
    for (std::size_t tx = 0; tx < px; ++tx) {
      std::size_t row = ty * px + tx, k = 0;
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x)
          for (std::size_t c = 0; c < C; ++c)
            out.at(row, k++) = hwc[((ty * P + y) * W + (tx * P + x)) * C + c];
    }
  return out;
}

// softmax(Q K^T / sqrt(d_k)) V for one head.
template <class E>
typename E::M self_attention_head(E& e, typename E::M h, typename E::M wq, typename E::M wk,
                                  typename E::M wv) {
  auto q = e.matmul(h, wq);
  auto k = e.matmul(h, wk);
  auto v = e.matmul(h, wv);
  double dk = static_cast<double>(e.val(wq).cols());
  auto scores = e.scale(e.matmul(q, e.transpose(k)), 1.0 / std::sqrt(dk));
  return e.matmul(e.row_softmax(scores), v);
}

// Concatenates head outputs along features and projects back to d.
template <class E>
typename E::M multi_head_attention(E& e, const std::vector<typename E::M>& head_outs,
                                   typename E::M wo, typename E::M wo_bias) {
  auto cat = e.concat_cols(head_outs);
  if (e.val(cat).cols() != e.val(wo).rows())
    throw std::invalid_argument("multi_head_attention: concatenated head dim " +
                                std::to_string(e.val(cat).cols()) + " vs Wo rows " +
                                std::to_string(e.val(wo).rows()));
  return e.add_rowvec(e.matmul(cat, wo), wo_bias);
}

// Pre-norm block: H' = H + MHA(LN(H)); H'' = H' + FFN(LN(H')).
template <class E>
typename E::M block_forward(E& e, typename E::M h, BlockParams& b) {
  auto norm1 = e.layer_norm_rows(h, e.param(b.ln1_gain), e.param(b.ln1_offset));
  std::vector<typename E::M> head_outs;
  head_outs.reserve(b.heads.size());
  for (AttentionHeadParams& hp : b.heads)
    head_outs.push_back(
        self_attention_head(e, norm1, e.param(hp.wq), e.param(hp.wk), e.param(hp.wv)));
  h = e.add(h, multi_head_attention(e, head_outs, e.param(b.wo), e.param(b.wo_bias)));
  auto norm2 = e.layer_norm_rows(h, e.param(b.ln2_gain), e.param(b.ln2_offset));
  auto hidden = e.gelu(e.add_rowvec(e.matmul(norm2, e.param(b.ffn_w1)), e.param(b.ffn_b1)));
  auto ffn = e.add_rowvec(e.matmul(hidden, e.param(b.ffn_w2)), e.param(b.ffn_b2));
  return e.add(h, ffn);
}

template <class E>
typename E::M run_blocks(E& e, typename E::M h, VitParams& vit, std::size_t from, std::size_t to) {
  if (to > vit.blocks.size() || from > to)
    throw std::invalid_argument("run_blocks: bad range [" + std::to_string(from) + ", " +
                                std::to_string(to) + ")");
  for (std::size_t l = from; l < to; ++l) h = block_forward(e, h, vit.blocks[l]);
  return h;
}

// Patch rows + positional embeddings, class token, then the budget row. The
// budget token carries budget information, not position, so it gets no
// positional embedding.
template <class E>
typename E::M patch_embed(E& e, const Tensor& patch_matrix, VitParams& vit,
                          typename E::M budget_row) {
  const std::size_t n_p = vit.cfg.patch_tokens();
  if (patch_matrix.rows() != n_p || patch_matrix.cols() != vit.cfg.patch_dim())
    throw std::invalid_argument("patch_embed: patch matrix " + patch_matrix.shape_str() +
                                " does not match config");
  auto pos = e.param(vit.pos);
  auto tokens = e.add_rowvec(e.matmul(e.constant(patch_matrix), e.param(vit.patch_w)),
                             e.param(vit.patch_b));
  tokens = e.add(tokens, e.slice_rows(pos, 0, n_p));
  auto cls_row = e.add(e.param(vit.cls), e.slice_rows(pos, n_p, 1));
  return e.concat_rows({tokens, cls_row, budget_row});
}

// Logits from the class-token row only.
template <class E>
typename E::M classify(E& e, typename E::M h, std::size_t class_index, VitParams& vit) {
  if (class_index >= e.val(h).rows())
    throw std::invalid_argument("classify: class-token index " + std::to_string(class_index) +
                                " out of range for " + std::to_string(e.val(h).rows()) + " rows");
  auto row = e.slice_rows(h, class_index, 1);
  row = e.layer_norm_rows(row, e.param(vit.out_ln_gain), e.param(vit.out_ln_offset));
  return e.add_rowvec(e.matmul(row, e.param(vit.head_w)), e.param(vit.head_b));
}

struct SplitView {
  std::size_t encoder_begin = 0, encoder_end = 0;
  std::size_t decoder_begin = 0, decoder_end = 0;
};

// Partition the blocks at index s: first s in the encoder, the rest in the
// decoder. Composing the halves reproduces the unsplit forward exactly.
inline SplitView split_model(const ModelConfig& cfg, std::size_t s) {
  if (!(s > 1 && s < cfg.blocks))
    throw std::invalid_argument("split_model: split " + std::to_string(s) +
                                " must satisfy 1 < s < " + std::to_string(cfg.blocks));
  return SplitView{0, s, s, cfg.blocks};
}

}  // namespace tokcom
