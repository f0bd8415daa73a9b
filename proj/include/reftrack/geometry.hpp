#pragma once

#include <cstdint>
#include <vector>

namespace reftrack {

/// Normalized box, center/size form, values in [0,1].
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;

  double x1() const { return cx - w / 2; }
  double y1() const { return cy - h / 2; }
  double x2() const { return cx + w / 2; }
  double y2() const { return cy + h / 2; }
  double area() const { return w * h; }
};

double box_iou(const Box& a, const Box& b);

/// Generalized IoU: IoU - |C \ (A u B)| / |C| with C the tightest enclosing
/// box. Degenerate zero-area inputs take the limit (IoU term 0).
double giou(const Box& a, const Box& b);

/// Binary mask, row-major.
struct BinMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> data;

  bool empty_area() const {
    for (auto v : data)
      if (v) return false;
    return true;
  }
};

/// Intersection over union of binary masks; empty-over-empty is 0.
double mask_iou(const BinMask& a, const BinMask& b);

/// Dice loss 1 - 2|A n B| / (|A| + |B|) on binary masks; exactly 0 iff the
/// masks are identical and nonempty (both-empty is defined as 1).
double dice_loss_binary(const BinMask& a, const BinMask& b);

}  // namespace reftrack
