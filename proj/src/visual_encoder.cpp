#include "reftrack/visual_encoder.hpp"

#include <stdexcept>

namespace reftrack {

namespace {

Tensor conv_weight(int k, int cin, int cout, Rng& rng) {
  Tensor w = Tensor::zeros({k, k, cin, cout}, true);
  init_fanin(w, k * k * cin, rng);
  return w;
}

Tensor conv_bias(int k, int cin, int cout, Rng& rng) {
  Tensor b = Tensor::zeros({cout}, true);
  init_fanin(b, k * k * cin, rng);
  return b;
}

}  // namespace

VisualEncoder::VisualEncoder(int d, Rng& rng) {
  w1_ = conv_weight(3, 3, 16, rng);
  b1_ = conv_bias(3, 3, 16, rng);
  w2_ = conv_weight(3, 16, kStride4Channels, rng);
  b2_ = conv_bias(3, 16, kStride4Channels, rng);
  w3_ = conv_weight(3, kStride4Channels, 48, rng);
  b3_ = conv_bias(3, kStride4Channels, 48, rng);
  wp_ = conv_weight(1, 48, d, rng);
  bp_ = conv_bias(1, 48, d, rng);
}

VisualEncoder::Output VisualEncoder::encode(const Frame& frame) const {
  const Tensor& img = frame.image;
  if (img.rank() != 3 || img.dim(2) != 3) {
    throw std::invalid_argument("visual encoder: frame must be [H x W x 3], got " +
                                shape_str(img.shape()));
  }
  if (img.dim(0) % 8 != 0 || img.dim(1) % 8 != 0) {
    throw std::invalid_argument("visual encoder: frame dims " + shape_str(img.shape()) +
                                " must be divisible by 8");
  }
  Tensor s2 = relu(conv2d(img, w1_, b1_, 2));
  Tensor s4 = relu(conv2d(s2, w2_, b2_, 2));
  Tensor s8 = relu(conv2d(s4, w3_, b3_, 2));
  Tensor proj = conv2d(s8, wp_, bp_, 1);
  return {{s4, 4}, {proj, 8}};
}

void VisualEncoder::collect(ParamList& out) const {
  out.push_back({"visual.conv1.w", w1_});
  out.push_back({"visual.conv1.b", b1_});
  out.push_back({"visual.conv2.w", w2_});
  out.push_back({"visual.conv2.b", b2_});
  out.push_back({"visual.conv3.w", w3_});
  out.push_back({"visual.conv3.b", b3_});
  out.push_back({"visual.proj.w", wp_});
  out.push_back({"visual.proj.b", bp_});
}

}  // namespace reftrack
