#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tubeprune/adam.hpp"
#include "tubeprune/dataset.hpp"
#include "tubeprune/nn.hpp"
#include "tubeprune/tensor.hpp"

namespace tubeprune {

// Fresh pixel-space evaluator: a per-frame stack of two stride-equals-kernel
// convolutions (realized as affine maps over non-overlapping patches),
// temporal mean pooling, and an MLP head. Small enough that its parameter
// count stays an order of magnitude below the anonymizer's.
struct ProbeConfig {
  std::size_t conv1_kernel = 4;
  std::size_t conv1_channels = 16;
  std::size_t conv2_block = 2;
  std::size_t conv2_channels = 32;
  std::size_t mlp_hidden = 64;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-3;
};

enum class ProbeTask { action, privacy };

class Probe {
 public:
  Probe(const ProbeConfig& cfg, std::size_t channels, std::size_t height,
        std::size_t width, std::size_t out_dim, ProbeTask task, Rng rng)
      : cfg_(cfg), channels_(channels), height_(height), width_(width),
        out_dim_(out_dim), task_(task) {
    detail::require(height % cfg.conv1_kernel == 0 && width % cfg.conv1_kernel == 0,
                    "probe: frame not divisible by conv1 kernel");
    gh1_ = height / cfg.conv1_kernel;
    gw1_ = width / cfg.conv1_kernel;
    detail::require(gh1_ % cfg.conv2_block == 0 && gw1_ % cfg.conv2_block == 0,
                    "probe: conv1 grid not divisible by conv2 block");
    gh2_ = gh1_ / cfg.conv2_block;
    gw2_ = gw1_ / cfg.conv2_block;
    const std::size_t patch1 = channels * cfg.conv1_kernel * cfg.conv1_kernel;
    const std::size_t patch2 =
        cfg.conv1_channels * cfg.conv2_block * cfg.conv2_block;
    feat_dim_ = gh2_ * gw2_ * cfg.conv2_channels;
    c1_w_ = Tensor::randn({patch1, cfg.conv1_channels}, rng, 0.05, true);
    c1_b_ = Tensor::zeros({cfg.conv1_channels}, true);
    c2_w_ = Tensor::randn({patch2, cfg.conv2_channels}, rng, 0.05, true);
    c2_b_ = Tensor::zeros({cfg.conv2_channels}, true);
    fc1_w_ = Tensor::randn({feat_dim_, cfg.mlp_hidden}, rng, 0.05, true);
    fc1_b_ = Tensor::zeros({cfg.mlp_hidden}, true);
    fc2_w_ = Tensor::randn({cfg.mlp_hidden, out_dim}, rng, 0.05, true);
    fc2_b_ = Tensor::zeros({out_dim}, true);
    build_regroup_map();
  }

  ProbeTask task() const { return task_; }
  std::size_t out_dim() const { return out_dim_; }

  std::vector<Tensor> params() const {
    return {c1_w_, c1_b_, c2_w_, c2_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_};
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params()) n += t.size();
    return n;
  }

  // logits, 1 x out_dim
  Tensor forward(const VideoTensor& v) const {
    detail::require(v.channels == channels_ && v.height == height_ &&
                        v.width == width_,
                    "probe: video shape mismatch");
    std::vector<Tensor> frame_feats;
    frame_feats.reserve(v.frames);
    for (std::size_t t = 0; t < v.frames; ++t) {
      const Tensor patches = extract_patches(v, t);           // (gh1*gw1) x patch1
      Tensor h = gelu(linear(patches, c1_w_, c1_b_));         // -> conv1 channels
      h = gather_flat(h, regroup_map_,
                      {gh2_ * gw2_,
                       cfg_.conv1_channels * cfg_.conv2_block * cfg_.conv2_block});
      h = gelu(linear(h, c2_w_, c2_b_));                      // -> conv2 channels
      frame_feats.push_back(reshape(h, {1, feat_dim_}));
    }
    const Tensor pooled = mean_over_axis(concat_rows(frame_feats), 0);
    const Tensor hidden = gelu(linear(pooled, fc1_w_, fc1_b_));
    return linear(hidden, fc2_w_, fc2_b_);
  }

  // Post-activation scores for metrics: softmax-free logits for action
  // (argmax only), sigmoid probabilities for privacy.
  std::vector<double> scores(const VideoTensor& v) const {
    Tape::SuspendScope no_tape;
    const Tensor logits = forward(v);
    std::vector<double> out(logits.values());
    if (task_ == ProbeTask::privacy)
      for (double& z : out) z = sigmoid(z);
    return out;
  }

 private:
  Tensor extract_patches(const VideoTensor& v, std::size_t t) const {
    const std::size_t k = cfg_.conv1_kernel;
    const std::size_t patch = channels_ * k * k;
    std::vector<double> data;
    data.reserve(gh1_ * gw1_ * patch);
    for (std::size_t gy = 0; gy < gh1_; ++gy)
      for (std::size_t gx = 0; gx < gw1_; ++gx)
        for (std::size_t c = 0; c < channels_; ++c)
          for (std::size_t y = 0; y < k; ++y)
            for (std::size_t x = 0; x < k; ++x)
              data.push_back(v.at(t, c, gy * k + y, gx * k + x));
    return Tensor::from({gh1_ * gw1_, patch}, std::move(data));
  }

  void build_regroup_map() {
    const std::size_t b = cfg_.conv2_block, ch = cfg_.conv1_channels;
    regroup_map_.resize(gh2_ * gw2_ * b * b * ch);
    std::size_t i = 0;
    for (std::size_t by = 0; by < gh2_; ++by)
      for (std::size_t bx = 0; bx < gw2_; ++bx)
        for (std::size_t sy = 0; sy < b; ++sy)
          for (std::size_t sx = 0; sx < b; ++sx)
            for (std::size_t c = 0; c < ch; ++c)
              regroup_map_[i++] =
                  ((by * b + sy) * gw1_ + (bx * b + sx)) * ch + c;
  }

  ProbeConfig cfg_;
  std::size_t channels_, height_, width_, out_dim_;
  ProbeTask task_;
  std::size_t gh1_, gw1_, gh2_, gw2_, feat_dim_;
  std::vector<std::size_t> regroup_map_;
  Tensor c1_w_, c1_b_, c2_w_, c2_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

struct ProbeTrainResult {
  std::vector<double> epoch_loss;
};

inline ProbeTrainResult train_probe(Probe& probe,
                                    const std::vector<LabeledVideo>& dataset,
                                    const ProbeConfig& cfg, Rng rng) {
  detail::require(!dataset.empty(), "train_probe: empty dataset");
  Adam adam(probe.params(), AdamConfig{cfg.lr});
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  ProbeTrainResult res;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = rng.fork("shuffle", epoch);
    shuffle_rng.shuffle(order.begin(), order.end());
    double epoch_total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      Tape tape;
      Tensor loss;
      {
        Tape::Scope scope(tape);
        std::vector<Tensor> rows;
        std::vector<std::size_t> labels;
        std::vector<double> targets;
        for (std::size_t i = start; i < end; ++i) {
          const LabeledVideo& s = dataset[order[i]];
          rows.push_back(probe.forward(s.video));
          if (probe.task() == ProbeTask::action) {
            labels.push_back(s.y_action);
          } else {
            for (int b : s.y_priv) targets.push_back(static_cast<double>(b));
          }
        }
        const Tensor batch_logits = concat_rows(rows);
        loss = (probe.task() == ProbeTask::action)
                   ? cross_entropy(batch_logits, labels)
                   : bce_with_logits(batch_logits,
                                     Tensor::from({end - start, probe.out_dim()},
                                                  std::move(targets)));
      }
      for (Tensor& p : probe.params()) p.zero_grad();
      tape.backward(loss);
      adam.step();
      epoch_total += loss.item();
      ++steps;
    }
    res.epoch_loss.push_back(epoch_total / static_cast<double>(steps));
  }
  return res;
}

}  // namespace tubeprune
