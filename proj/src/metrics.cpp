#include "reftrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "reftrack/matching.hpp"

namespace reftrack {

double similarity(const TrajectoryEntry& pred, const TrajectoryEntry& gt, SimilarityMode mode) {
  if (mode == SimilarityMode::BoxIou) return box_iou(pred.box, gt.box);
  if (!pred.mask.has_value() || !gt.mask.has_value()) {
    throw std::invalid_argument("similarity: mask mode requires masks on both sides");
  }
  return mask_iou(*pred.mask, *gt.mask);
}

namespace {

void check_ids(const TrajectorySet& ts, const char* side) {
  for (std::size_t f = 0; f < ts.frames.size(); ++f) {
    std::set<int> seen;
    for (const TrajectoryEntry& e : ts.frames[f]) {
      if (!seen.insert(e.id).second) {
        throw std::invalid_argument(std::string("evaluate: duplicate ") + side + " id " +
                                    std::to_string(e.id) + " in frame " + std::to_string(f));
      }
    }
  }
}

struct FramePairs {
  // similarity and matched pairs (pred index, gt index) for one frame
  std::vector<std::vector<double>> sim;
  std::vector<std::pair<int, int>> matches;
};

}  // namespace

HotaResult evaluate(const TrajectorySet& pred, const TrajectorySet& gt, SimilarityMode mode) {
  return evaluate_many({pred}, {gt}, mode);
}

HotaResult evaluate_many(const std::vector<TrajectorySet>& preds,
                         const std::vector<TrajectorySet>& gts, SimilarityMode mode) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("evaluate: sequence count mismatch");
  }
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].frame_count() != gts[s].frame_count()) {
      throw std::invalid_argument("evaluate: frame range mismatch in sequence " +
                                  std::to_string(s));
    }
    check_ids(preds[s], "prediction");
    check_ids(gts[s], "gt");
  }

  HotaResult result;
  for (int i = 1; i <= 19; ++i) result.thresholds.push_back(0.05 * i);

  // pairwise similarities once per frame; thresholds reuse them
  struct FrameData {
    std::vector<std::vector<double>> sim;  // [pred x gt]
    std::vector<long> pred_keys, gt_keys;  // namespaced ids
  };
  std::vector<FrameData> all_frames;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const long ns = static_cast<long>(s) << 32;
    for (int f = 0; f < preds[s].frame_count(); ++f) {
      FrameData fd;
      const auto& pf = preds[s].frames[static_cast<std::size_t>(f)];
      const auto& gf = gts[s].frames[static_cast<std::size_t>(f)];
      fd.sim.assign(pf.size(), std::vector<double>(gf.size(), 0.0));
      for (std::size_t i = 0; i < pf.size(); ++i) {
        for (std::size_t j = 0; j < gf.size(); ++j) {
          fd.sim[i][j] = similarity(pf[i], gf[j], mode);
        }
      }
      for (const auto& e : pf) fd.pred_keys.push_back(ns | static_cast<unsigned int>(e.id));
      for (const auto& e : gf) fd.gt_keys.push_back(ns | static_cast<unsigned int>(e.id));
      all_frames.push_back(std::move(fd));
    }
  }

  std::map<long, long> gt_present, pred_present;
  for (const FrameData& fd : all_frames) {
    for (long k : fd.gt_keys) ++gt_present[k];
    for (long k : fd.pred_keys) ++pred_present[k];
  }

  double sum_hota = 0, sum_deta = 0, sum_assa = 0;
  double sum_detre = 0, sum_detpr = 0, sum_assre = 0, sum_asspr = 0;
  double loc_sim_total = 0;
  long loc_tp_total = 0;

  for (double tau : result.thresholds) {
    long tp = 0, fp = 0, fn = 0;
    std::map<std::pair<long, long>, long> pair_count;

    for (const FrameData& fd : all_frames) {
      const int np = static_cast<int>(fd.pred_keys.size());
      const int ng = static_cast<int>(fd.gt_keys.size());
      std::vector<std::pair<int, int>> matches;
      if (np > 0 && ng > 0) {
        // maximize total similarity over pairs with sim >= tau
        std::vector<std::vector<double>> cost(static_cast<std::size_t>(np),
                                              std::vector<double>(static_cast<std::size_t>(ng), 0.0));
        bool any = false;
        for (int i = 0; i < np; ++i) {
          for (int j = 0; j < ng; ++j) {
            if (fd.sim[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] >= tau) {
              cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                  -fd.sim[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
              any = true;
            }
          }
        }
        if (any) {
          Assignment a = hungarian(cost);
          for (auto [i, j] : a.pairs) {
            if (fd.sim[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] >= tau) {
              matches.emplace_back(i, j);
            }
          }
        }
      }
      tp += static_cast<long>(matches.size());
      fp += np - static_cast<long>(matches.size());
      fn += ng - static_cast<long>(matches.size());
      for (auto [i, j] : matches) {
        ++pair_count[{fd.pred_keys[static_cast<std::size_t>(i)], fd.gt_keys[static_cast<std::size_t>(j)]}];
        loc_sim_total += fd.sim[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        ++loc_tp_total;
      }
    }

    const double det_a = (tp + fp + fn) > 0 ? double(tp) / double(tp + fp + fn) : 0.0;
    const double det_re = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
    const double det_pr = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;

    // association factors averaged over TP instances
    double ass_a = 0, ass_re = 0, ass_pr = 0;
    if (tp > 0) {
      for (const auto& [key, tpa] : pair_count) {
        const long fna = gt_present[key.second] - tpa;
        const long fpa = pred_present[key.first] - tpa;
        const double a_c = double(tpa) / double(tpa + fna + fpa);
        const double are = double(tpa) / double(tpa + fna);
        const double apr = double(tpa) / double(tpa + fpa);
        ass_a += a_c * double(tpa);
        ass_re += are * double(tpa);
        ass_pr += apr * double(tpa);
      }
      ass_a /= double(tp);
      ass_re /= double(tp);
      ass_pr /= double(tp);
    }

    const double hota_tau = std::sqrt(det_a * ass_a);
    result.det_a_per_threshold.push_back(det_a);
    result.ass_a_per_threshold.push_back(ass_a);
    result.hota_per_threshold.push_back(hota_tau);
    sum_hota += hota_tau;
    sum_deta += det_a;
    sum_assa += ass_a;
    sum_detre += det_re;
    sum_detpr += det_pr;
    sum_assre += ass_re;
    sum_asspr += ass_pr;
  }

  const double n = static_cast<double>(result.thresholds.size());
  result.hota = sum_hota / n;
  result.det_a = sum_deta / n;
  result.ass_a = sum_assa / n;
  result.det_re = sum_detre / n;
  result.det_pr = sum_detpr / n;
  result.ass_re = sum_assre / n;
  result.ass_pr = sum_asspr / n;
  result.loc_a = loc_tp_total > 0 ? loc_sim_total / static_cast<double>(loc_tp_total) : 0.0;
  return result;
}

std::string format_report(const HotaResult& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-6s %-6s %-6s %-6s %-6s %-6s %-6s %-6s\n", "HOTA", "DetA",
                "AssA", "DetRe", "DetPr", "AssRe", "AssPr", "LocA");
  out << line;
  std::snprintf(line, sizeof(line), "%.4f %.4f %.4f %.4f %.4f %.4f %.4f %.4f\n", r.hota, r.det_a,
                r.ass_a, r.det_re, r.det_pr, r.ass_re, r.ass_pr, r.loc_a);
  out << line;
  return out.str();
}

}  // namespace reftrack
