#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tubeprune/nn.hpp"
#include "tubeprune/rng.hpp"
#include "tubeprune/tensor.hpp"

namespace tubeprune {

// Sequence layout: position 0 = act_CLS, position 1 = priv_CLS, positions
// 2..M+1 = tubelet tokens.
inline constexpr std::size_t kActCls = 0;
inline constexpr std::size_t kPrivCls = 1;
inline constexpr std::size_t kFirstTubelet = 2;

// Binary pre-softmax attention mask over M+2 positions. Everything is
// allowed except the CLS-CLS block in both directions; each CLS token keeps
// its self-attention so its row is never empty.
inline Tensor build_dual_cls_mask(std::size_t live_tubelets) {
  detail::require(live_tubelets >= 1, "build_dual_cls_mask: M must be >= 1");
  const std::size_t s = live_tubelets + 2;
  Tensor mask = Tensor::full({s, s}, 1.0);
  mask.at(kActCls, kPrivCls) = 0.0;
  mask.at(kPrivCls, kActCls) = 0.0;
  return mask;
}

struct BlockConfig {
  std::size_t heads = 4;
  double dropout_p = 0.2;
  double attn_dropout_p = 0.1;
  double ln_eps = 1e-5;
};

// One encoder layer: two layernorms, fused QKV projection, output
// projection, and a D -> 4D -> D MLP.
struct BlockParams {
  Tensor ln1_g, ln1_b;
  Tensor qkv_w, qkv_b;    // D x 3D, 3D
  Tensor proj_w, proj_b;  // D x D, D
  Tensor ln2_g, ln2_b;
  Tensor fc1_w, fc1_b;  // D x 4D, 4D
  Tensor fc2_w, fc2_b;  // 4D x D, D

  static BlockParams init(std::size_t dim, Rng& rng) {
    BlockParams p;
    p.ln1_g = Tensor::full({dim}, 1.0, true);
    p.ln1_b = Tensor::zeros({dim}, true);
    p.qkv_w = Tensor::randn({dim, 3 * dim}, rng, 0.02, true);
    p.qkv_b = Tensor::zeros({3 * dim}, true);
    p.proj_w = Tensor::randn({dim, dim}, rng, 0.02, true);
    p.proj_b = Tensor::zeros({dim}, true);
    p.ln2_g = Tensor::full({dim}, 1.0, true);
    p.ln2_b = Tensor::zeros({dim}, true);
    p.fc1_w = Tensor::randn({dim, 4 * dim}, rng, 0.02, true);
    p.fc1_b = Tensor::zeros({4 * dim}, true);
    p.fc2_w = Tensor::randn({4 * dim, dim}, rng, 0.02, true);
    p.fc2_b = Tensor::zeros({dim}, true);
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named(
      const std::string& prefix) const {
    return {{prefix + ".ln1.g", ln1_g},   {prefix + ".ln1.b", ln1_b},
            {prefix + ".qkv.w", qkv_w},   {prefix + ".qkv.b", qkv_b},
            {prefix + ".proj.w", proj_w}, {prefix + ".proj.b", proj_b},
            {prefix + ".ln2.g", ln2_g},   {prefix + ".ln2.b", ln2_b},
            {prefix + ".fc1.w", fc1_w},   {prefix + ".fc1.b", fc1_b},
            {prefix + ".fc2.w", fc2_w},   {prefix + ".fc2.b", fc2_b}};
  }
};

// Post-softmax CLS attention rows, one 1 x (M+2) row per head, captured
// before attention dropout and head concatenation.
struct AttentionRecord {
  std::vector<Tensor> act_rows;
  std::vector<Tensor> priv_rows;
  std::size_t heads() const { return act_rows.size(); }
};

// Scaled dot-product attention with the dual-CLS mask. Caller normalizes
// the input; the record exposes the CLS rows for pruning.
inline std::pair<Tensor, AttentionRecord> masked_mhsa(
    const Tensor& tokens, const BlockParams& p, const Tensor& mask,
    const BlockConfig& cfg, bool train_mode = false, Rng* rng = nullptr) {
  const std::size_t s = tokens.rows(), d = tokens.cols();
  detail::require(d % cfg.heads == 0, "masked_mhsa: D not divisible by heads");
  detail::require(mask.shape().size() == 2 && mask.rows() == s && mask.cols() == s,
                  "masked_mhsa: mask shape mismatch");
  const std::size_t hd = d / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  const Tensor qkv = linear(tokens, p.qkv_w, p.qkv_b);  // s x 3D
  AttentionRecord rec;
  std::vector<Tensor> head_outs;
  head_outs.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Tensor q = slice_cols(qkv, h * hd, (h + 1) * hd);
    const Tensor k = slice_cols(qkv, d + h * hd, d + (h + 1) * hd);
    const Tensor v = slice_cols(qkv, 2 * d + h * hd, 2 * d + (h + 1) * hd);
    const Tensor logits = scale(matmul(q, transpose(k)), inv_sqrt);
    const Tensor probs = masked_softmax(logits, mask);
    rec.act_rows.push_back(slice_rows(probs, kActCls, kActCls + 1));
    rec.priv_rows.push_back(slice_rows(probs, kPrivCls, kPrivCls + 1));
    Tensor probs_used = probs;
    if (train_mode && cfg.attn_dropout_p > 0.0) {
      detail::require(rng != nullptr, "masked_mhsa: train mode needs an rng");
      probs_used = dropout(probs, cfg.attn_dropout_p, true, *rng);
    }
    head_outs.push_back(matmul(probs_used, v));
  }
  Tensor out = concat_cols(head_outs);
  out = linear(out, p.proj_w, p.proj_b);
  if (train_mode && cfg.dropout_p > 0.0)
    out = dropout(out, cfg.dropout_p, true, *rng);
  return {out, std::move(rec)};
}

// Pre-norm residual block: x + MHSA(LN(x)), then + MLP(LN(x)).
inline std::pair<Tensor, AttentionRecord> transformer_block(
    const Tensor& tokens, const BlockParams& p, const Tensor& mask,
    const BlockConfig& cfg, bool train_mode = false, Rng* rng = nullptr) {
  auto [attn_out, rec] =
      masked_mhsa(layernorm(tokens, p.ln1_g, p.ln1_b, cfg.ln_eps), p, mask,
                  cfg, train_mode, rng);
  Tensor x = add(tokens, attn_out);
  Tensor m = layernorm(x, p.ln2_g, p.ln2_b, cfg.ln_eps);
  m = gelu(linear(m, p.fc1_w, p.fc1_b));
  if (train_mode && cfg.dropout_p > 0.0) m = dropout(m, cfg.dropout_p, true, *rng);
  m = linear(m, p.fc2_w, p.fc2_b);
  if (train_mode && cfg.dropout_p > 0.0) m = dropout(m, cfg.dropout_p, true, *rng);
  return {add(x, m), std::move(rec)};
}

}  // namespace tubeprune
