#pragma once

#include "reftrack/nn.hpp"
#include "reftrack/tensor.hpp"

namespace reftrack {

/// One video frame: [H x W x 3] values in [0,1], H and W divisible by 8.
struct Frame {
  Tensor image;
  int index = 0;
};

struct FeatureMap {
  Tensor features;  // [h x w x c]
  int stride = 0;   // 4 or 8 relative to the input frame
};

/// Small strided convolutional stack producing a 1/4-scale map for the
/// segmentation branch and a 1/8-scale map projected to the model dim.
/// Replicate padding keeps constant inputs spatially constant.
class VisualEncoder {
 public:
  static constexpr int kStride4Channels = 32;

  VisualEncoder() = default;
  VisualEncoder(int d, Rng& rng);

  struct Output {
    FeatureMap stride4;  // [H/4 x W/4 x 32]
    FeatureMap stride8;  // [H/8 x W/8 x d]
  };
  Output encode(const Frame& frame) const;

  void collect(ParamList& out) const;

 private:
  Tensor w1_, b1_;  // 3 -> 16, stride 2
  Tensor w2_, b2_;  // 16 -> 32, stride 2 (1/4 scale tap)
  Tensor w3_, b3_;  // 32 -> 48, stride 2
  Tensor wp_, bp_;  // 48 -> d, 1x1 projection
};

}  // namespace reftrack
