#pragma once

#include <vector>

#include "reftrack/nn.hpp"
#include "reftrack/tensor.hpp"
#include "reftrack/visual_encoder.hpp"

namespace reftrack {

/// Language-aware visual features produced by the encoder stack.
struct Memory {
  Tensor features;  // [(h*w) x d]
  int h = 0;
  int w = 0;
};

/// Bidirectional word/pixel cross-attention sharing a single logit matrix.
///
/// S = (F_w Wq_L)(F_v Wq_I)^T / sqrt(d) is materialized once; the word-side
/// output applies row-softmax of S to the projected visual values, the
/// vision-side output applies row-softmax of S^T (a transposed copy of the
/// same buffer) to the projected word values.
struct CrossModalAttention {
  Tensor wq_lang, wq_img;    // d x d
  Tensor wv_lang, wv_img;    // d x d
  Tensor wout_lang, wout_img;

  CrossModalAttention() = default;
  CrossModalAttention(int d, Rng& rng);

  struct Output {
    Tensor word_out;    // [N x d]
    Tensor vision_out;  // [(hw) x d]
    Tensor logits;      // S, [N x hw]
    Tensor logits_t;    // transpose of the same buffer, [hw x N]
  };
  Output forward(const Tensor& words, const Tensor& vision) const;

  void collect(const std::string& prefix, ParamList& out) const;
};

/// One interleaving layer: visual self-attention, bidirectional cross-modal
/// attention updating both streams, then a feed-forward block per stream.
/// Pre-norm residuals throughout.
struct CrossModalLayer {
  MultiHeadAttention self_attn;
  LayerNorm ln_self;
  CrossModalAttention cross;
  LayerNorm ln_cross_vis, ln_cross_word;
  Mlp ffn_vis, ffn_word;
  LayerNorm ln_ffn_vis, ln_ffn_word;

  CrossModalLayer() = default;
  CrossModalLayer(int d, int heads, Rng& rng);

  struct Streams {
    Tensor vision;
    Tensor words;
  };
  Streams forward(const Tensor& vision, const Tensor& words, const Tensor& vis_pos,
                  bool fuse_language) const;

  void collect(const std::string& prefix, ParamList& out) const;
};

/// The interleaving cross-modality encoder: L layers producing the memory.
class CrossModalEncoder {
 public:
  CrossModalEncoder() = default;
  CrossModalEncoder(int d, int layers, int heads, Rng& rng);

  /// `stride8` must already be projected to the model dim. When
  /// `fuse_language` is false the word stream is carried but never mixed in
  /// (encoder ablation).
  Memory encode(const FeatureMap& stride8, const Tensor& word_features,
                bool fuse_language = true) const;

  int layer_count() const { return static_cast<int>(layers_.size()); }
  const CrossModalLayer& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }

  void collect(ParamList& out) const;

 private:
  std::vector<CrossModalLayer> layers_;
};

}  // namespace reftrack
