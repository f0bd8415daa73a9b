#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reftrack/geometry.hpp"

namespace reftrack {

enum class SimilarityMode { BoxIou, MaskIou };

struct TrajectoryEntry {
  int id = -1;
  Box box;
  std::optional<BinMask> mask;
};

/// Per-frame object lists with consistent ids; ground truth carries only
/// referred objects.
struct TrajectorySet {
  std::vector<std::vector<TrajectoryEntry>> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

double similarity(const TrajectoryEntry& pred, const TrajectoryEntry& gt, SimilarityMode mode);

struct HotaResult {
  double hota = 0, det_a = 0, ass_a = 0;
  double det_re = 0, det_pr = 0, ass_re = 0, ass_pr = 0;
  double loc_a = 0;
  std::vector<double> thresholds;
  std::vector<double> hota_per_threshold;
  std::vector<double> det_a_per_threshold;
  std::vector<double> ass_a_per_threshold;
};

/// HOTA family over localization thresholds 0.05..0.95: per-frame matching
/// maximizes total similarity among pairs at or above the threshold; any
/// prediction without a referred-gt match is a false positive. Final values
/// average over the thresholds; LocA pools TP similarities across them.
HotaResult evaluate(const TrajectorySet& pred, const TrajectorySet& gt, SimilarityMode mode);

/// Concatenated evaluation over sequence pairs (ids namespaced per pair).
HotaResult evaluate_many(const std::vector<TrajectorySet>& preds,
                         const std::vector<TrajectorySet>& gts, SimilarityMode mode);

std::string format_report(const HotaResult& r);

}  // namespace reftrack
