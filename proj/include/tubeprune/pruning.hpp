#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "tubeprune/attention.hpp"
#include "tubeprune/tokenizer.hpp"

namespace tubeprune {

// Head-averaged CLS-to-tubelet attention weights. Differentiable handles so
// fusion can route gradients back through the attention rows.
struct AlphaPair {
  Tensor act;   // 1 x M
  Tensor priv;  // 1 x M
};

// Average the per-head CLS rows, keep the tubelet entries, and (by default)
// renormalize them to sum 1 so scores stay comparable across layers.
inline AlphaPair compute_alpha(const AttentionRecord& rec, std::size_t live,
                               bool renormalize = true) {
  detail::require(rec.heads() >= 1 && rec.priv_rows.size() == rec.heads(),
                  "compute_alpha: empty record");
  const std::size_t s = live + 2;
  for (const Tensor& r : rec.act_rows)
    detail::require(r.cols() == s, "compute_alpha: row length mismatch");
  const auto reduce = [&](const std::vector<Tensor>& rows) {
    Tensor mean = (rows.size() == 1)
                      ? rows[0]
                      : mean_over_axis(concat_rows(rows), 0);  // 1 x s
    Tensor tub = slice_cols(mean, kFirstTubelet, s);           // 1 x M
    return renormalize ? normalize_sum(tub) : tub;
  };
  return AlphaPair{reduce(rec.act_rows), reduce(rec.priv_rows)};
}

// Detached utility-privacy scores: s_i = alpha_act[i] - lambda_priv * alpha_priv[i].
struct ScoreVector {
  std::vector<double> s;
  double lambda_priv = 0.5;
};

inline ScoreVector score(const AlphaPair& alpha, double lambda_priv) {
  detail::require(alpha.act.size() == alpha.priv.size(),
                  "score: alpha length mismatch");
  ScoreVector sv;
  sv.lambda_priv = lambda_priv;
  sv.s.resize(alpha.act.size());
  for (std::size_t i = 0; i < sv.s.size(); ++i)
    sv.s[i] = alpha.act.values()[i] - lambda_priv * alpha.priv.values()[i];
  return sv;
}

struct PruneDecision {
  std::vector<std::size_t> kept;     // sorted ascending
  std::vector<std::size_t> dropped;  // sorted ascending
  bool fused_appended = false;
};

// Deterministic top-k: ties broken toward the lower index; the kept list is
// re-sorted ascending to preserve token order.
inline PruneDecision topk(const ScoreVector& sv, std::size_t k) {
  const std::size_t m = sv.s.size();
  detail::require(k >= 1 && k <= m, "topk: k out of range");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sv.s[a] != sv.s[b]) return sv.s[a] > sv.s[b];
    return a < b;
  });
  PruneDecision d;
  d.kept.assign(order.begin(), order.begin() + k);
  d.dropped.assign(order.begin() + k, order.end());
  std::sort(d.kept.begin(), d.kept.end());
  std::sort(d.dropped.begin(), d.dropped.end());
  return d;
}

// Compress dropped tokens into one residual token: weights are the action
// attention over the drop set renormalized to sum 1, so the result stays in
// the convex hull of the dropped rows.
inline Tensor fuse(const Tensor& dropped_tokens, const Tensor& alpha_act_dropped) {
  detail::require(dropped_tokens.shape().size() == 2 && dropped_tokens.rows() >= 1,
                  "fuse: empty drop set");
  detail::require(alpha_act_dropped.size() == dropped_tokens.rows(),
                  "fuse: weight length mismatch");
  const Tensor w = normalize_sum(alpha_act_dropped);
  return weighted_row_sum(dropped_tokens, w);
}

// Number of tokens retained at one pruning layer: ceil(r * m) with a snap
// for rates like 0.9 whose binary representation lands a hair above the
// rational value.
inline std::size_t keep_count(std::size_t m, double rate) {
  detail::require(rate > 0.0 && rate <= 1.0, "keep_count: rate out of (0, 1]");
  const double x = rate * static_cast<double>(m);
  double k = std::floor(x);
  if (x - k > 1e-9) k += 1.0;
  return static_cast<std::size_t>(std::max(1.0, k));
}

struct PruneSchedule {
  std::vector<std::size_t> layers;  // 1-based block indices
  double keep_rate = 0.9;
  bool fusion = true;
};

// Rebuild the token state after one pruning decision: CLS tokens pass
// through, kept tubelets stay in original order, the fused token (if any)
// is appended with a FUSED origin.
inline TokenState apply_prune(const TokenState& state, const PruneDecision& d,
                              const std::optional<Tensor>& t_fuse = std::nullopt) {
  const std::size_t m = state.live_count();
  detail::require(d.kept.size() + d.dropped.size() == m,
                  "apply_prune: decision does not partition the tokens");
  std::vector<bool> seen(m, false);
  for (std::size_t i : d.kept) {
    detail::require(i < m && !seen[i], "apply_prune: bad kept index");
    seen[i] = true;
  }
  for (std::size_t i : d.dropped) {
    detail::require(i < m && !seen[i], "apply_prune: bad dropped index");
    seen[i] = true;
  }
  detail::require(d.fused_appended == t_fuse.has_value(),
                  "apply_prune: fused flag does not match fused token");
  if (t_fuse) {
    detail::require(!d.dropped.empty(), "apply_prune: fusion with empty drop set");
    detail::require(t_fuse->shape().size() == 2 && t_fuse->rows() == 1 &&
                        t_fuse->cols() == state.tokens.cols(),
                    "apply_prune: fused token shape mismatch");
  }
  TokenState out;
  out.act_cls = state.act_cls;
  out.priv_cls = state.priv_cls;
  Tensor kept_tokens = gather_rows(state.tokens, d.kept);
  out.tokens = t_fuse ? concat_rows({kept_tokens, *t_fuse}) : kept_tokens;
  out.origin.reserve(d.kept.size() + (t_fuse ? 1 : 0));
  for (std::size_t i : d.kept) out.origin.push_back(state.origin[i]);
  if (t_fuse) out.origin.push_back(Origin::fused_token());
  return out;
}

}  // namespace tubeprune
