#include "reftrack/cross_encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace reftrack {

CrossModalAttention::CrossModalAttention(int d, Rng& rng) {
  auto make = [&] {
    Tensor t = Tensor::zeros({d, d}, true);
    init_fanin(t, d, rng);
    return t;
  };
  wq_lang = make();
  wq_img = make();
  wv_lang = make();
  wv_img = make();
  wout_lang = make();
  wout_img = make();
}

CrossModalAttention::Output CrossModalAttention::forward(const Tensor& words,
                                                         const Tensor& vision) const {
  const int d = wq_lang.dim(0);
  if (words.rank() != 2 || words.dim(1) != d || vision.rank() != 2 || vision.dim(1) != d) {
    throw std::logic_error("cross attention: streams must be [* x " + std::to_string(d) +
                           "], got " + shape_str(words.shape()) + " and " +
                           shape_str(vision.shape()));
  }
  Tensor word_q = matmul(words, wq_lang);
  Tensor img_q = matmul(vision, wq_img);
  Tensor logits = mul_scalar(matmul(word_q, transpose(img_q)), 1.0 / std::sqrt(double(d)));
  Tensor logits_t = transpose(logits);

  Tensor img_v = matmul(vision, wv_img);
  Tensor word_out = matmul(matmul(softmax(logits, 1), img_v), wout_img);

  Tensor word_v = matmul(words, wv_lang);
  Tensor vision_out = matmul(matmul(softmax(logits_t, 1), word_v), wout_lang);

  return {word_out, vision_out, logits, logits_t};
}

void CrossModalAttention::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".wq_lang", wq_lang});
  out.push_back({prefix + ".wq_img", wq_img});
  out.push_back({prefix + ".wv_lang", wv_lang});
  out.push_back({prefix + ".wv_img", wv_img});
  out.push_back({prefix + ".wout_lang", wout_lang});
  out.push_back({prefix + ".wout_img", wout_img});
}

CrossModalLayer::CrossModalLayer(int d, int heads, Rng& rng)
    : self_attn(d, heads, rng),
      ln_self(d),
      cross(d, rng),
      ln_cross_vis(d),
      ln_cross_word(d),
      ffn_vis(d, 4 * d, d, 2, rng),
      ffn_word(d, 4 * d, d, 2, rng),
      ln_ffn_vis(d),
      ln_ffn_word(d) {}

CrossModalLayer::Streams CrossModalLayer::forward(const Tensor& vision, const Tensor& words,
                                                  const Tensor& vis_pos,
                                                  bool fuse_language) const {
  Tensor v = vision;
  Tensor w = words;

  Tensor v_norm = ln_self.forward(v);
  Tensor v_qk = add(v_norm, vis_pos);
  v = add(v, self_attn.forward(v_qk, v_qk, v_norm));

  if (fuse_language) {
    auto fused = cross.forward(ln_cross_word.forward(w), ln_cross_vis.forward(v));
    v = add(v, fused.vision_out);
    w = add(w, fused.word_out);
  }

  v = add(v, ffn_vis.forward(ln_ffn_vis.forward(v)));
  w = add(w, ffn_word.forward(ln_ffn_word.forward(w)));
  return {v, w};
}

void CrossModalLayer::collect(const std::string& prefix, ParamList& out) const {
  self_attn.collect(prefix + ".self", out);
  ln_self.collect(prefix + ".ln_self", out);
  cross.collect(prefix + ".cross", out);
  ln_cross_vis.collect(prefix + ".ln_cross_vis", out);
  ln_cross_word.collect(prefix + ".ln_cross_word", out);
  ffn_vis.collect(prefix + ".ffn_vis", out);
  ffn_word.collect(prefix + ".ffn_word", out);
  ln_ffn_vis.collect(prefix + ".ln_ffn_vis", out);
  ln_ffn_word.collect(prefix + ".ln_ffn_word", out);
}

CrossModalEncoder::CrossModalEncoder(int d, int layers, int heads, Rng& rng) {
  for (int i = 0; i < layers; ++i) layers_.emplace_back(d, heads, rng);
}

Memory CrossModalEncoder::encode(const FeatureMap& stride8, const Tensor& word_features,
                                 bool fuse_language) const {
  if (stride8.stride != 8) {
    throw std::logic_error("encoder: expected a stride-8 feature map");
  }
  const int h = stride8.features.dim(0);
  const int w = stride8.features.dim(1);
  const int d = stride8.features.dim(2);
  Tensor vision = reshape(stride8.features, {h * w, d});
  Tensor pos = sine_position_2d(h, w, d);
  Tensor words = word_features;
  for (const CrossModalLayer& layer : layers_) {
    auto streams = layer.forward(vision, words, pos, fuse_language);
    vision = streams.vision;
    words = streams.words;  // final word stream is discarded after encoding
  }
  return {vision, h, w};
}

void CrossModalEncoder::collect(ParamList& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect("enc." + std::to_string(i), out);
  }
}

}  // namespace reftrack
