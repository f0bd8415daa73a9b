#pragma once

#include <string>
#include <vector>

#include "reftrack/checkpoint.hpp"
#include "reftrack/config.hpp"
#include "reftrack/dataset.hpp"
#include "reftrack/model.hpp"

namespace reftrack {

struct EpochStats {
  int epoch = 0;
  double total = 0, cls = 0, ref = 0, l1 = 0, giou = 0, mask = 0, dice = 0;
  int clips = 0;

  std::string format() const;
};

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  std::vector<EpochStats> epochs;
};

/// Clip-based online training: the first clip frame runs detect queries
/// only, later frames carry propagated track queries born from matched
/// detect rows. One optimizer step per clip; aborts on non-finite loss with
/// a diagnostic dump of the offending clip.
TrainResult train(const RunConfig& cfg);

/// Per-frame ground truth out of a sequence file.
std::vector<GroundTruthFrame> ground_truth_frames(const SequenceFile& sf);

/// Horizontal-flip augmentation helpers (geometry + expression tokens).
Tensor flip_image(const Tensor& image);
void flip_ground_truth(GroundTruthFrame& gt);
void flip_expression_tokens(Expression& expr, const Vocabulary& vocab);

}  // namespace reftrack
