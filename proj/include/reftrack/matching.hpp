#pragma once

#include <vector>

#include "reftrack/config.hpp"
#include "reftrack/decoder.hpp"
#include "reftrack/geometry.hpp"
#include "reftrack/tracker.hpp"

namespace reftrack {

struct GtObject {
  int id = -1;
  Box box;
  BinMask mask;  // stride-4 resolution
  bool referred = false;
};

struct GroundTruthFrame {
  std::vector<GtObject> objects;
};

/// Injective row->gt pairing plus the leftovers on both sides.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction row, gt index)
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_gts;
};

/// Minimal-cost bipartite assignment over min(m,n) pairs (rectangular
/// matrices are padded internally). NaN entries are rejected.
Assignment hungarian(const std::vector<std::vector<double>>& cost);
double assignment_total(const std::vector<std::vector<double>>& cost, const Assignment& a);

/// Matching-cue selection for the assignment cost (the loss always keeps
/// every term; these toggles only shape the cost matrix).
struct MatchWeights {
  LossWeights loss;
  bool use_box = true;
  bool use_mask = true;
};

/// Label-assignment cost between prediction rows and ground-truth objects:
/// focal-style classification on the confidence branch, L1 + (1-GIoU) box
/// terms and focal + dice mask terms, each scaled by its loss weight.
/// Requires mask logits on `out` when the mask cue is enabled.
std::vector<std::vector<double>> match_cost(const DecoderOutput& out,
                                            const std::vector<int>& rows,
                                            const GroundTruthFrame& gt,
                                            const std::vector<int>& gt_indices,
                                            const MatchWeights& weights);

/// Binds track rows to their persistent gt ids (positive only when that id
/// is present and referred this frame), then Hungarian-matches detect rows
/// against referred gts not claimed by any track. Non-referred gts are never
/// positive targets.
Assignment assign_labels(const QueryBatch& batch, const DecoderOutput& out,
                         const std::vector<TrackState>& tracks, const GroundTruthFrame& gt,
                         const MatchWeights& weights);

}  // namespace reftrack
