#include "reftrack/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace reftrack {

namespace {

double softplus_value(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double focal_cost_value(double logit, double target, double alpha, double gamma) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  const double pos = alpha * std::pow(1.0 - p, gamma) * softplus_value(-logit);
  const double neg = (1.0 - alpha) * std::pow(p, gamma) * softplus_value(logit);
  return target > 0.5 ? pos : neg;
}

}  // namespace

Assignment hungarian(const std::vector<std::vector<double>>& cost) {
  const int m = static_cast<int>(cost.size());
  const int nc = m > 0 ? static_cast<int>(cost[0].size()) : 0;
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != nc) {
      throw std::invalid_argument("hungarian: ragged cost matrix");
    }
    for (double v : row) {
      if (std::isnan(v)) throw std::invalid_argument("hungarian: NaN cost entry");
    }
  }

  Assignment result;
  if (m == 0 || nc == 0) {
    for (int i = 0; i < m; ++i) result.unmatched_rows.push_back(i);
    for (int j = 0; j < nc; ++j) result.unmatched_gts.push_back(j);
    return result;
  }

  // square padding with zero-cost filler; exactly one side gets dummies
  const int n = std::max(m, nc);
  auto at = [&](int i, int j) -> double {
    return (i < m && j < nc) ? cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] : 0.0;
  };

  // successive shortest augmenting paths with potentials (1-based arrays)
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = at(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  std::vector<char> row_matched(static_cast<std::size_t>(m), 0), col_matched(static_cast<std::size_t>(nc), 0);
  for (int j = 1; j <= n; ++j) {
    const int i = p[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= m && j <= nc) {
      result.pairs.emplace_back(i - 1, j - 1);
      row_matched[static_cast<std::size_t>(i - 1)] = 1;
      col_matched[static_cast<std::size_t>(j - 1)] = 1;
    }
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  for (int i = 0; i < m; ++i) {
    if (!row_matched[static_cast<std::size_t>(i)]) result.unmatched_rows.push_back(i);
  }
  for (int j = 0; j < nc; ++j) {
    if (!col_matched[static_cast<std::size_t>(j)]) result.unmatched_gts.push_back(j);
  }
  return result;
}

double assignment_total(const std::vector<std::vector<double>>& cost, const Assignment& a) {
  double total = 0.0;
  for (auto [r, c] : a.pairs) total += cost[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return total;
}

std::vector<std::vector<double>> match_cost(const DecoderOutput& out,
                                            const std::vector<int>& rows,
                                            const GroundTruthFrame& gt,
                                            const std::vector<int>& gt_indices,
                                            const MatchWeights& weights) {
  const LossWeights& lw = weights.loss;
  const bool need_mask = weights.use_mask && (lw.mask > 0 || lw.dice > 0);
  if (need_mask && !out.mask_logits.valid()) {
    throw std::logic_error("match_cost: mask cue requested but mask logits are unset");
  }
  std::vector<std::vector<double>> cost(rows.size(),
                                        std::vector<double>(gt_indices.size(), 0.0));
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const int r = rows[ri];
    const double conf_logit = out.conf_logits.at({r, 0});
    // single-class focal matching cost: prefer confident rows
    const double cls = lw.cls * (focal_cost_value(conf_logit, 1.0, lw.focal_alpha, lw.focal_gamma) -
                                 focal_cost_value(conf_logit, 0.0, lw.focal_alpha, lw.focal_gamma));
    Box pb{out.boxes.at({r, 0}), out.boxes.at({r, 1}), out.boxes.at({r, 2}), out.boxes.at({r, 3})};
    for (std::size_t gi = 0; gi < gt_indices.size(); ++gi) {
      const GtObject& obj = gt.objects[static_cast<std::size_t>(gt_indices[gi])];
      double entry = cls;
      if (weights.use_box) {
        const double l1 = std::abs(pb.cx - obj.box.cx) + std::abs(pb.cy - obj.box.cy) +
                          std::abs(pb.w - obj.box.w) + std::abs(pb.h - obj.box.h);
        entry += lw.l1 * l1 + lw.giou * (1.0 - giou(pb, obj.box));
      }
      if (need_mask) {
        const int pixels = out.mask_logits.dim(1);
        if (static_cast<int>(obj.mask.data.size()) != pixels) {
          throw std::logic_error("match_cost: gt mask resolution mismatch");
        }
        double focal_acc = 0.0;
        double num = 0.0, den = 0.0;
        for (int px = 0; px < pixels; ++px) {
          const double logit = out.mask_logits.at({r, px});
          const double target = obj.mask.data[static_cast<std::size_t>(px)] ? 1.0 : 0.0;
          focal_acc += focal_cost_value(logit, target, lw.focal_alpha, lw.focal_gamma);
          const double p = 1.0 / (1.0 + std::exp(-logit));
          num += p * target;
          den += p + target;
        }
        const double dice_cost = den > 0.0 ? 1.0 - 2.0 * num / den : 1.0;
        entry += lw.mask * (focal_acc / pixels) + lw.dice * dice_cost;
      }
      cost[ri][gi] = entry;
    }
  }
  return cost;
}

Assignment assign_labels(const QueryBatch& batch, const DecoderOutput& out,
                         const std::vector<TrackState>& tracks, const GroundTruthFrame& gt,
                         const MatchWeights& weights) {
  std::unordered_set<int> ids;
  for (const GtObject& obj : gt.objects) {
    if (!ids.insert(obj.id).second) {
      throw std::invalid_argument("assign_labels: duplicate gt id " + std::to_string(obj.id));
    }
  }
  if (static_cast<int>(tracks.size()) != batch.n_track) {
    throw std::logic_error("assign_labels: track list does not match batch rows");
  }

  Assignment result;
  std::vector<char> gt_taken(gt.objects.size(), 0);
  std::unordered_set<int> claimed_ids;
  for (const TrackState& t : tracks) {
    if (t.bound_gt >= 0) claimed_ids.insert(t.bound_gt);
  }

  // track rows keep their binding when the object is present and referred
  for (int ti = 0; ti < batch.n_track; ++ti) {
    const int row = batch.n_detect + ti;
    const int bound = tracks[static_cast<std::size_t>(ti)].bound_gt;
    bool positive = false;
    if (bound >= 0) {
      for (std::size_t gi = 0; gi < gt.objects.size(); ++gi) {
        if (gt.objects[gi].id == bound && gt.objects[gi].referred) {
          result.pairs.emplace_back(row, static_cast<int>(gi));
          gt_taken[gi] = 1;
          positive = true;
          break;
        }
      }
    }
    if (!positive) result.unmatched_rows.push_back(row);
  }

  // detect rows compete for referred gts not claimed by any track
  std::vector<int> candidates;
  for (std::size_t gi = 0; gi < gt.objects.size(); ++gi) {
    if (gt.objects[gi].referred && !claimed_ids.count(gt.objects[gi].id)) {
      candidates.push_back(static_cast<int>(gi));
    }
  }
  std::vector<int> detect_rows(static_cast<std::size_t>(batch.n_detect));
  for (int i = 0; i < batch.n_detect; ++i) detect_rows[static_cast<std::size_t>(i)] = i;

  if (!candidates.empty()) {
    auto cost = match_cost(out, detect_rows, gt, candidates, weights);
    Assignment sub = hungarian(cost);
    for (auto [r, c] : sub.pairs) {
      result.pairs.emplace_back(detect_rows[static_cast<std::size_t>(r)],
                                candidates[static_cast<std::size_t>(c)]);
      gt_taken[static_cast<std::size_t>(candidates[static_cast<std::size_t>(c)])] = 1;
    }
    for (int r : sub.unmatched_rows) result.unmatched_rows.push_back(detect_rows[static_cast<std::size_t>(r)]);
  } else {
    for (int r : detect_rows) result.unmatched_rows.push_back(r);
  }

  for (std::size_t gi = 0; gi < gt.objects.size(); ++gi) {
    if (!gt_taken[gi]) result.unmatched_gts.push_back(static_cast<int>(gi));
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  std::sort(result.unmatched_rows.begin(), result.unmatched_rows.end());
  return result;
}

}  // namespace reftrack
