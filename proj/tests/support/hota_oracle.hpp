#pragma once

#include <cmath>
#include <map>
#include <vector>

namespace reftrack::testing {

// Standalone HOTA reference: exhaustive per-frame matching over injective
// pairings; recomputes every count from scratch. Shares nothing with the
// evaluator it checks.

struct OracleFrame {
  std::vector<int> pred_ids;
  std::vector<int> gt_ids;
  std::vector<std::vector<double>> sim;  // [pred x gt]
};

struct OracleResult {
  double hota = 0, det_a = 0, ass_a = 0;
};

namespace detail {

// enumerate all injective pred->gt maps restricted to sim >= tau, keep max
// total similarity
inline void enumerate(const OracleFrame& f, double tau, std::size_t pred_idx,
                      std::vector<int>& current, std::vector<char>& gt_used, double sim_acc,
                      double& best_sim, std::vector<int>& best) {
  if (pred_idx == f.pred_ids.size()) {
    if (sim_acc > best_sim) {
      best_sim = sim_acc;
      best = current;
    }
    return;
  }
  current[pred_idx] = -1;
  enumerate(f, tau, pred_idx + 1, current, gt_used, sim_acc, best_sim, best);
  for (std::size_t g = 0; g < f.gt_ids.size(); ++g) {
    if (gt_used[g] || f.sim[pred_idx][g] < tau) continue;
    gt_used[g] = 1;
    current[pred_idx] = static_cast<int>(g);
    enumerate(f, tau, pred_idx + 1, current, gt_used, sim_acc + f.sim[pred_idx][g], best_sim, best);
    gt_used[g] = 0;
  }
  current[pred_idx] = -1;
}

}  // namespace detail

inline OracleResult hota_reference(const std::vector<OracleFrame>& frames) {
  std::map<int, long> gt_present, pred_present;
  for (const auto& f : frames) {
    for (int g : f.gt_ids) ++gt_present[g];
    for (int p : f.pred_ids) ++pred_present[p];
  }

  double sum_hota = 0, sum_deta = 0, sum_assa = 0;
  int taus = 0;
  for (int t = 1; t <= 19; ++t) {
    const double tau = 0.05 * t;
    long tp = 0, fp = 0, fn = 0;
    std::map<std::pair<int, int>, long> pair_count;
    for (const auto& f : frames) {
      std::vector<int> best(f.pred_ids.size(), -1), current(f.pred_ids.size(), -1);
      std::vector<char> gt_used(f.gt_ids.size(), 0);
      double best_sim = -1.0;
      detail::enumerate(f, tau, 0, current, gt_used, 0.0, best_sim, best);
      long matched = 0;
      for (std::size_t p = 0; p < best.size(); ++p) {
        if (best[p] >= 0) {
          ++matched;
          ++pair_count[{f.pred_ids[p], f.gt_ids[static_cast<std::size_t>(best[p])]}];
        }
      }
      tp += matched;
      fp += static_cast<long>(f.pred_ids.size()) - matched;
      fn += static_cast<long>(f.gt_ids.size()) - matched;
    }
    const double det_a = (tp + fp + fn) > 0 ? double(tp) / double(tp + fp + fn) : 0.0;
    double ass_a = 0;
    if (tp > 0) {
      for (const auto& [key, tpa] : pair_count) {
        const long fna = gt_present[key.second] - tpa;
        const long fpa = pred_present[key.first] - tpa;
        ass_a += double(tpa) * double(tpa) / double(tpa + fna + fpa);
      }
      ass_a /= double(tp);
    }
    sum_hota += std::sqrt(det_a * ass_a);
    sum_deta += det_a;
    sum_assa += ass_a;
    ++taus;
  }
  return {sum_hota / taus, sum_deta / taus, sum_assa / taus};
}

}  // namespace reftrack::testing
