#pragma once

#include <vector>

#include "reftrack/config.hpp"
#include "reftrack/cross_encoder.hpp"
#include "reftrack/nn.hpp"
#include "reftrack/tensor.hpp"
#include "reftrack/tracker.hpp"

namespace reftrack {

enum class RowOrigin { Detect, Track };

/// Concatenated detect + track queries entering the decoder: detect rows
/// first, track rows after in track order.
struct QueryBatch {
  Tensor content;  // [(N_d + P) x d]
  Tensor anchors;  // [(N_d + P) x 4], values in [0,1]
  std::vector<RowOrigin> origins;
  std::vector<int> track_ids;  // -1 for detect rows
  int n_detect = 0;
  int n_track = 0;

  int rows() const { return n_detect + n_track; }
};

struct DecoderOutput {
  Tensor embeddings;   // E_t, [R x d]
  Tensor boxes;        // [R x 4] in [0,1]
  Tensor conf_logits;  // [R x 1]
  Tensor ref_logits;   // [R x 1]
  Tensor mask_logits;  // [R x (H/4 * W/4)]; invalid() until produced
  std::vector<double> conf;  // sigmoid scores
  std::vector<double> ref;
};

struct DecoderLayer {
  MultiHeadAttention self_attn;
  MultiHeadAttention cross_attn;
  LayerNorm ln_self, ln_cross, ln_ffn;
  Mlp ffn;

  DecoderLayer() = default;
  DecoderLayer(int d, int heads, Rng& rng);

  Tensor forward(const Tensor& x, const Tensor& pos, const Tensor& memory,
                 const Tensor& memory_pos) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Decoder with learned detect queries/anchors, anchor-conditioned
/// positional parts, and the box/score/mask prediction heads.
class LanguageGuidedDecoder {
 public:
  LanguageGuidedDecoder() = default;
  LanguageGuidedDecoder(const ModelConfig& cfg, Rng& rng);

  /// Content = concat(detect, track contents) + F_s broadcast to every row
  /// (skipped when inject_sentence is false); anchors = concat(learned
  /// detect anchors, track anchors).
  QueryBatch build_queries(const std::vector<TrackState>& tracks, const Tensor& sentence,
                           bool inject_sentence = true) const;

  /// L_dec layers of query self-attention, cross-attention into the memory
  /// and a feed-forward block; every query carries F_pos(anchor) in both
  /// attentions and memory keys carry 2-D sinusoidal positions.
  Tensor decode(const Memory& memory, const QueryBatch& batch) const;

  /// Box = sigmoid(inverse_sigmoid(anchor) + FFN_box(E)); conf/ref from
  /// independent linear heads. Mask logits stay unset.
  DecoderOutput predict(const Tensor& embeddings, const Tensor& anchors) const;

  /// Pixel map at stride 4: Conv(f_i) + bilinear-upsampled memory,
  /// flattened to [(H/4*W/4) x d].
  Tensor pixel_embedding_map(const FeatureMap& stride4, const Memory& memory) const;

  /// Mask logits <seg(E row), pixel map> for the given embedding rows.
  Tensor predict_masks(const Tensor& embeddings, const Tensor& pixel_map) const;

  int n_detect() const { return n_detect_; }
  const Tensor& detect_content() const { return detect_content_; }
  void collect(ParamList& out) const;

 private:
  int d_ = 0;
  int n_detect_ = 0;
  Tensor detect_content_;        // [N_d x d]
  Tensor detect_anchor_logits_;  // [N_d x 4], sigmoid gives the anchor box
  std::vector<DecoderLayer> layers_;
  Mlp pos_embed_;  // 2-layer FFN over the box sine features
  Mlp box_head_;   // 3-layer FFN -> 4 offsets
  Linear conf_head_;
  Linear ref_head_;
  Mlp seg_head_;      // 3-layer FFN -> d
  Tensor pixel_w_;    // 1x1 conv, stride-4 channels -> d
  Tensor pixel_b_;
};

}  // namespace reftrack
