#pragma once

#include <vector>

#include "reftrack/config.hpp"
#include "reftrack/decoder.hpp"
#include "reftrack/matching.hpp"
#include "reftrack/tensor.hpp"

namespace reftrack {

/// Binary focal loss on logits with per-element targets in {0,1}; returns
/// the elementwise sum. Gamma must be a small nonnegative integer.
Tensor focal_loss_sum(const Tensor& logits, const std::vector<double>& targets, double alpha,
                      double gamma);

/// Differentiable 1 - GIoU summed over box pairs ([k x 4] each, cxcywh).
Tensor giou_loss_sum(const Tensor& pred, const Tensor& target);

/// Differentiable soft dice loss summed over mask rows: probabilities from
/// the logits against binary targets, eps-guarded denominator.
Tensor dice_loss_sum(const Tensor& mask_logits, const Tensor& targets);

struct LossBreakdown {
  Tensor total;  // scalar, on the tape
  double cls = 0, ref = 0, l1 = 0, giou = 0, mask = 0, dice = 0;
  int positives = 0;

  double value() const { return total.value(); }
};

/// Full per-frame training loss: focal conf/ref over all rows (positives
/// from the assignment, negatives toward 0), L1 + GIoU + mask focal + dice
/// over the matched rows, everything normalized by max(1, positives).
/// Requires mask logits for all rows when mask/dice weights are nonzero.
LossBreakdown total_loss(const DecoderOutput& out, const Assignment& assignment,
                         const GroundTruthFrame& gt, const LossWeights& weights);

}  // namespace reftrack
