#pragma once

#include <string>
#include <vector>

#include "reftrack/config.hpp"
#include "reftrack/dataset.hpp"
#include "reftrack/formats.hpp"
#include "reftrack/metrics.hpp"
#include "reftrack/model.hpp"

namespace reftrack {

/// Frame-by-frame online tracking over a sequence directory: encode, fuse,
/// decode, spawn/propagate, then emit box + mask records for every track
/// passing both thresholds this frame. No post-processing.
SequenceFile track_sequence(const Model& model, const std::string& seq_dir,
                            const std::string& expression);

/// Same pipeline over frames already in memory (tests).
SequenceFile track_frames(const Model& model, const std::vector<Tensor>& frames,
                          const std::string& expression, const std::string& sequence_name);

/// Trajectory view of a record file; ground truth keeps referred rows only.
TrajectorySet trajectory_from_file(const SequenceFile& sf, bool referred_only, bool need_masks);

/// Evaluate one prediction file against one ground-truth file.
HotaResult evaluate_pair(const SequenceFile& pred, const SequenceFile& gt, SimilarityMode mode);

struct SplitEval {
  HotaResult box;
  HotaResult mask;
  int pairs = 0;
};

/// Track + evaluate every (sequence, expression) pair of a dataset split.
SplitEval evaluate_on_split(const Model& model, const DatasetIndex& index, bool test_split,
                            bool occlusion_only = false);

struct AblationRow {
  std::string cell;
  HotaResult box;
  HotaResult mask;
};

/// Trains one model per sweep cell under identical seeds/budgets and
/// evaluates each on the test split. Sweeps: "alpha" (0, 0.2, .., 1.0),
/// "components" (full / no_ice / no_lgd), "cues" (box+mask / box / mask).
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::string& sweep);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace reftrack
