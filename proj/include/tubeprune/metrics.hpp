#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "tubeprune/tensor.hpp"

namespace tubeprune {

// Top-1 accuracy in percent; argmax ties break toward the lower class index.
inline double top1(const std::vector<std::vector<double>>& scores,
                   const std::vector<std::size_t>& labels) {
  detail::require(scores.size() == labels.size(), "top1: length mismatch");
  detail::require(!scores.empty(), "top1: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < scores[i].size(); ++j)
      if (scores[i][j] > scores[i][arg]) arg = j;
    if (arg == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(scores.size());
}

// Average precision for one attribute column: samples ranked by descending
// score with ties broken toward the lower sample index, then the mean of
// precision-at-rank over the positive positions.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& targets) {
  detail::require(scores.size() == targets.size(),
                  "average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 1; rank <= order.size(); ++rank) {
    if (targets[order[rank - 1]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  detail::require(hits > 0, "average_precision: no positives");
  return sum / static_cast<double>(hits);
}

struct CmapResult {
  double cmap = 0.0;                    // percent over included attributes
  std::vector<double> per_attr_ap;      // decimals, one per included attribute
  std::vector<std::size_t> included;    // attribute indices with >= 1 positive
  std::vector<std::size_t> excluded;    // positive-free columns, logged by callers
};

// Class-wise mean average precision over binary attributes, in percent.
// scores: B x P rows, targets: matching binary rows.
inline CmapResult cmap(const std::vector<std::vector<double>>& scores,
                       const std::vector<std::vector<int>>& targets) {
  detail::require(scores.size() == targets.size() && !scores.empty(),
                  "cmap: shape mismatch");
  const std::size_t p = scores[0].size();
  CmapResult res;
  double total = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> col_s(scores.size());
    std::vector<int> col_t(scores.size());
    std::size_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      col_s[i] = scores[i][j];
      col_t[i] = targets[i][j];
      positives += static_cast<std::size_t>(col_t[i] == 1);
    }
    if (positives == 0) {
      res.excluded.push_back(j);
      continue;
    }
    const double ap = average_precision(col_s, col_t);
    res.per_attr_ap.push_back(ap);
    res.included.push_back(j);
    total += ap;
  }
  if (res.included.empty())
    throw std::domain_error("cmap: no attribute has positives");
  res.cmap = 100.0 * total / static_cast<double>(res.included.size());
  return res;
}

// Macro-averaged F1 at a fixed threshold, as a decimal. Columns without
// positives are excluded, mirroring cmap.
inline double f1_macro(const std::vector<std::vector<double>>& scores,
                       const std::vector<std::vector<int>>& targets,
                       double threshold = 0.5) {
  detail::require(scores.size() == targets.size() && !scores.empty(),
                  "f1_macro: shape mismatch");
  const std::size_t p = scores[0].size();
  double total = 0.0;
  std::size_t included = 0;
  for (std::size_t j = 0; j < p; ++j) {
    std::size_t tp = 0, fp = 0, fn = 0, positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool pred = scores[i][j] >= threshold;
      const bool act = targets[i][j] == 1;
      positives += static_cast<std::size_t>(act);
      if (pred && act) ++tp;
      if (pred && !act) ++fp;
      if (!pred && act) ++fn;
    }
    if (positives == 0) continue;
    const double denom = static_cast<double>(2 * tp + fp + fn);
    total += (denom > 0.0) ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    ++included;
  }
  detail::require(included > 0, "f1_macro: no attribute has positives");
  return total / static_cast<double>(included);
}

struct MetricsReport {
  double action_top1 = 0.0;   // percent
  double privacy_cmap = 0.0;  // percent
  double privacy_f1 = 0.0;    // decimal
  double keep_rate = 1.0;
  std::uint64_t seed = 0;
  double wall_s = 0.0;
};

}  // namespace tubeprune
