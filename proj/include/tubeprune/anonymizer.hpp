#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tubeprune/adam.hpp"
#include "tubeprune/attention.hpp"
#include "tubeprune/checkpoint.hpp"
#include "tubeprune/dataset.hpp"
#include "tubeprune/pruning.hpp"
#include "tubeprune/tokenizer.hpp"

namespace tubeprune {

// Model structure plus pruning behaviour; everything a forward pass needs.
// Defaults are the desk-scale configuration.
struct AnonymizerConfig {
  std::size_t frames = 16, channels = 3, height = 32, width = 32;
  TubeletConfig tubelet{};  // 2 x 8 x 8 cells, 64-dim tokens
  std::size_t heads = 4;
  std::size_t layers = 6;
  std::size_t action_classes = 4;
  std::size_t privacy_attrs = 3;
  double dropout_p = 0.2;
  double attn_dropout_p = 0.1;
  double ln_eps = 1e-5;
  PruneSchedule prune{{2, 4}, 0.9, true};
  double lambda_priv = 0.5;
  bool renormalize_alpha = true;

  std::size_t embed_dim() const { return tubelet.embed_dim; }
  TubeletGrid grid() const {
    return make_grid(frames, channels, height, width, tubelet);
  }
  BlockConfig block_config() const {
    return BlockConfig{heads, dropout_p, attn_dropout_p, ln_eps};
  }
  void validate() const {
    detail::require(action_classes >= 2, "config: need at least 2 action classes");
    detail::require(privacy_attrs >= 1, "config: need at least 1 privacy attribute");
    detail::require(layers >= 1, "config: need at least 1 layer");
    detail::require(embed_dim() % heads == 0, "config: D not divisible by heads");
    for (std::size_t l : prune.layers)
      detail::require(l >= 1 && l <= layers, "config: prune layer out of range");
    (void)grid();
  }
};

struct AnonymizerParams {
  Tensor embed_w, embed_b;  // cell volume x D, D
  Tensor pos;               // M x D
  Tensor act_cls, priv_cls; // 1 x D
  std::vector<BlockParams> blocks;
  Tensor head_act_w, head_act_b;    // D x A, A
  Tensor head_priv_w, head_priv_b;  // D x P, P

  static AnonymizerParams init(const AnonymizerConfig& cfg, Rng rng) {
    cfg.validate();
    const TubeletGrid g = cfg.grid();
    const std::size_t d = cfg.embed_dim();
    AnonymizerParams p;
    p.embed_w = Tensor::randn({g.cell_volume(), d}, rng, 0.02, true);
    p.embed_b = Tensor::zeros({d}, true);
    p.pos = Tensor::randn({g.total_cells(), d}, rng, 0.02, true);
    p.act_cls = Tensor::randn({1, d}, rng, 0.02, true);
    p.priv_cls = Tensor::randn({1, d}, rng, 0.02, true);
    for (std::size_t l = 0; l < cfg.layers; ++l)
      p.blocks.push_back(BlockParams::init(d, rng));
    p.head_act_w = Tensor::randn({d, cfg.action_classes}, rng, 0.02, true);
    p.head_act_b = Tensor::zeros({cfg.action_classes}, true);
    p.head_priv_w = Tensor::randn({d, cfg.privacy_attrs}, rng, 0.02, true);
    p.head_priv_b = Tensor::zeros({cfg.privacy_attrs}, true);
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named() const {
    std::vector<std::pair<std::string, Tensor>> out = {
        {"cls.act", act_cls},         {"cls.priv", priv_cls},
        {"embed.b", embed_b},         {"embed.w", embed_w},
        {"head_act.b", head_act_b},   {"head_act.w", head_act_w},
        {"head_priv.b", head_priv_b}, {"head_priv.w", head_priv_w},
        {"pos", pos}};
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      char prefix[16];
      std::snprintf(prefix, sizeof(prefix), "block%02zu", l);
      for (auto& kv : blocks[l].named(prefix)) out.push_back(std::move(kv));
    }
    return out;
  }

  std::vector<Tensor> all() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  void zero_grad() {
    for (Tensor& t : all()) t.zero_grad();
  }

  bool all_finite() const {
    for (const Tensor& t : all())
      if (!t.all_finite()) return false;
    return true;
  }
};

inline void save_params(const std::string& path, const AnonymizerParams& p) {
  std::map<std::string, Tensor> m;
  for (auto& [name, t] : p.named()) m.emplace(name, t);
  save_checkpoint(path, m);
}

inline AnonymizerParams load_params(const std::string& path,
                                    const AnonymizerConfig& cfg) {
  AnonymizerParams p = AnonymizerParams::init(cfg, Rng(0));
  std::map<std::string, Tensor> stored = load_checkpoint(path);
  for (auto& [name, t] : p.named()) {
    auto it = stored.find(name);
    if (it == stored.end())
      throw std::runtime_error("load_params: missing tensor " + name);
    if (it->second.shape() != t.shape())
      throw std::runtime_error("load_params: shape mismatch for " + name);
    t.values() = it->second.values();
    stored.erase(it);
  }
  if (!stored.empty())
    throw std::runtime_error("load_params: unexpected tensor " +
                             stored.begin()->first);
  return p;
}

struct PruneTraceLayer {
  std::size_t layer = 0;  // 1-based block index
  std::vector<double> scores;
  std::vector<std::size_t> kept, dropped;
  std::vector<Origin> kept_origins, dropped_origins;
  double margin = 0.0;  // min kept score minus max dropped score
  bool fused_appended = false;
  std::size_t live_before = 0, live_after = 0;
};

struct ForwardOptions {
  bool train_mode = false;
  Rng* rng = nullptr;
  // When set, a gradient reversal layer with this coefficient sits between
  // the final priv_CLS representation and the privacy head.
  std::optional<double> grl_lambda;
};

struct ForwardResult {
  Tensor act_logits;   // 1 x A
  Tensor priv_logits;  // 1 x P
  std::vector<PruneTraceLayer> trace;
  TokenState final_state;
};

inline bool is_prune_layer(const PruneSchedule& sched, std::size_t layer) {
  return std::find(sched.layers.begin(), sched.layers.end(), layer) !=
         sched.layers.end();
}

inline ForwardResult anonymizer_forward(const VideoTensor& video,
                                        const AnonymizerParams& p,
                                        const AnonymizerConfig& cfg,
                                        const ForwardOptions& opt = {}) {
  TokenState st = tokenize(video, cfg.tubelet, p.embed_w, p.embed_b, p.pos);
  st.act_cls = p.act_cls;
  st.priv_cls = p.priv_cls;
  const BlockConfig bc = cfg.block_config();
  ForwardResult res;
  for (std::size_t layer = 1; layer <= cfg.layers; ++layer) {
    const std::size_t m = st.live_count();
    const Tensor z = concat_rows({st.act_cls, st.priv_cls, st.tokens});
    const Tensor mask = build_dual_cls_mask(m);
    auto [z_out, rec] = transformer_block(z, p.blocks[layer - 1], mask, bc,
                                          opt.train_mode, opt.rng);
    st.act_cls = slice_rows(z_out, kActCls, kActCls + 1);
    st.priv_cls = slice_rows(z_out, kPrivCls, kPrivCls + 1);
    st.tokens = slice_rows(z_out, kFirstTubelet, m + 2);
    if (is_prune_layer(cfg.prune, layer)) {
      const AlphaPair alpha = compute_alpha(rec, m, cfg.renormalize_alpha);
      const ScoreVector sv = score(alpha, cfg.lambda_priv);
      const std::size_t k = keep_count(m, cfg.prune.keep_rate);
      PruneDecision d = topk(sv, k);
      std::optional<Tensor> fused;
      if (cfg.prune.fusion && !d.dropped.empty()) {
        fused = fuse(gather_rows(st.tokens, d.dropped),
                     gather_flat(alpha.act, d.dropped, {1, d.dropped.size()}));
        d.fused_appended = true;
      }
      PruneTraceLayer tl;
      tl.layer = layer;
      tl.scores = sv.s;
      tl.kept = d.kept;
      tl.dropped = d.dropped;
      for (std::size_t i : d.kept) tl.kept_origins.push_back(st.origin[i]);
      for (std::size_t i : d.dropped) tl.dropped_origins.push_back(st.origin[i]);
      tl.fused_appended = d.fused_appended;
      tl.live_before = m;
      if (!d.dropped.empty()) {
        double min_kept = HUGE_VAL, max_dropped = -HUGE_VAL;
        for (std::size_t i : d.kept) min_kept = std::min(min_kept, sv.s[i]);
        for (std::size_t i : d.dropped) max_dropped = std::max(max_dropped, sv.s[i]);
        tl.margin = min_kept - max_dropped;
      } else {
        tl.margin = HUGE_VAL;
      }
      st = apply_prune(st, d, fused);
      tl.live_after = st.live_count();
      res.trace.push_back(std::move(tl));
    }
  }
  res.act_logits = linear(st.act_cls, p.head_act_w, p.head_act_b);
  const Tensor priv_in =
      opt.grl_lambda ? grl(st.priv_cls, *opt.grl_lambda) : st.priv_cls;
  res.priv_logits = linear(priv_in, p.head_priv_w, p.head_priv_b);
  res.final_state = std::move(st);
  return res;
}

// Reported values: total is the sum of the two terms; the GRL flips the
// budget gradient in backward, never the reported loss.
struct LossBreakdown {
  double total = 0.0;
  double utility = 0.0;  // L_T
  double budget = 0.0;   // L_B
};

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch = 8;
  double lr = 1e-3;
  double lambda_grl = 1.0;
  std::uint64_t seed = 42;
};

// One optimizer update over a minibatch under the adversarial objective.
inline LossBreakdown adversarial_step(
    const std::vector<const LabeledVideo*>& batch, AnonymizerParams& params,
    Adam& adam, const AnonymizerConfig& cfg, double lambda_grl, Rng& rng) {
  detail::require(!batch.empty(), "adversarial_step: empty batch");
  Tape tape;
  Tensor loss, l_t, l_b;
  {
    Tape::Scope scope(tape);
    std::vector<Tensor> act_rows, priv_rows;
    std::vector<std::size_t> labels;
    std::vector<double> targets;
    for (const LabeledVideo* s : batch) {
      detail::require(s->y_action < cfg.action_classes,
                      "adversarial_step: action label out of range");
      detail::require(s->y_priv.size() == cfg.privacy_attrs,
                      "adversarial_step: attribute vector length mismatch");
      ForwardOptions opt;
      opt.train_mode = true;
      opt.rng = &rng;
      opt.grl_lambda = lambda_grl;
      ForwardResult r = anonymizer_forward(s->video, params, cfg, opt);
      act_rows.push_back(r.act_logits);
      priv_rows.push_back(r.priv_logits);
      labels.push_back(s->y_action);
      for (int b : s->y_priv) {
        detail::require(b == 0 || b == 1, "adversarial_step: non-binary attribute");
        targets.push_back(static_cast<double>(b));
      }
    }
    const Tensor act_batch = concat_rows(act_rows);
    const Tensor priv_batch = concat_rows(priv_rows);
    const Tensor target_t =
        Tensor::from({batch.size(), cfg.privacy_attrs}, std::move(targets));
    l_t = cross_entropy(act_batch, labels);
    l_b = bce_with_logits(priv_batch, target_t);
    loss = add(l_t, l_b);
  }
  params.zero_grad();
  tape.backward(loss);
  adam.step();
  return LossBreakdown{l_t.item() + l_b.item(), l_t.item(), l_b.item()};
}

struct TrainResult {
  AnonymizerParams params;
  std::vector<LossBreakdown> step_log;
  std::vector<LossBreakdown> epoch_log;
};

inline TrainResult train_anonymizer(const std::vector<LabeledVideo>& dataset,
                                    const AnonymizerConfig& cfg,
                                    const TrainConfig& tcfg) {
  detail::require(!dataset.empty(), "train_anonymizer: empty dataset");
  detail::require(tcfg.epochs >= 1 && tcfg.batch >= 1,
                  "train_anonymizer: epochs and batch must be >= 1");
  const Rng root(tcfg.seed);
  TrainResult res;
  res.params = AnonymizerParams::init(cfg, root.fork("init"));
  Adam adam(res.params.all(), AdamConfig{tcfg.lr});
  Rng dropout_rng = root.fork("dropout");
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    Rng shuffle_rng = root.fork("shuffle", epoch);
    shuffle_rng.shuffle(order.begin(), order.end());
    double sum_u = 0.0, sum_b = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch);
      std::vector<const LabeledVideo*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&dataset[order[i]]);
      const LossBreakdown lb = adversarial_step(batch, res.params, adam, cfg,
                                                tcfg.lambda_grl, dropout_rng);
      res.step_log.push_back(lb);
      sum_u += lb.utility;
      sum_b += lb.budget;
      ++steps;
    }
    LossBreakdown epoch_lb;
    epoch_lb.utility = sum_u / static_cast<double>(steps);
    epoch_lb.budget = sum_b / static_cast<double>(steps);
    epoch_lb.total = epoch_lb.utility + epoch_lb.budget;
    res.epoch_log.push_back(epoch_lb);
  }
  return res;
}

struct RenderResult {
  VideoTensor video;
  std::vector<CellCoord> surviving;  // origin cells alive after all pruning
  std::vector<PruneTraceLayer> trace;
};

// Pixel-space anonymization: regions of surviving tubelets pass through
// untouched; every other pixel takes the fill value. Fused tokens render
// nothing.
inline RenderResult render_anonymized(const VideoTensor& video,
                                      const AnonymizerParams& params,
                                      const AnonymizerConfig& cfg,
                                      double fill = 0.0) {
  Tape::SuspendScope no_tape;
  ForwardResult fr = anonymizer_forward(video, params, cfg, ForwardOptions{});
  RenderResult out;
  out.trace = std::move(fr.trace);
  out.video = VideoTensor::zeros(video.frames, video.channels, video.height,
                                 video.width);
  std::fill(out.video.data.begin(), out.video.data.end(), fill);
  const TubeletGrid g = cfg.grid();
  for (const Origin& o : fr.final_state.origin) {
    if (o.fused) continue;
    out.surviving.push_back(o.cell);
    const PixelBox box = index_to_region(g, o);
    for (std::size_t t = box.t0; t < box.t1; ++t)
      for (std::size_t c = 0; c < video.channels; ++c)
        for (std::size_t y = box.h0; y < box.h1; ++y)
          for (std::size_t x = box.w0; x < box.w1; ++x)
            out.video.at(t, c, y, x) = video.at(t, c, y, x);
  }
  return out;
}

}  // namespace tubeprune
