#pragma once

#include <vector>

#include "reftrack/config.hpp"
#include "reftrack/cross_encoder.hpp"
#include "reftrack/decoder.hpp"
#include "reftrack/text_encoder.hpp"
#include "reftrack/tracker.hpp"
#include "reftrack/visual_encoder.hpp"

namespace reftrack {

/// The full referring tracker: text/visual encoders, cross-modal encoder,
/// language-guided decoder and prediction heads, wired per the config.
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, const Vocabulary& vocab, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }

  TextEncoder::Output encode_text(const Expression& expr) const {
    return text_.encode(expr);
  }

  struct FrameResult {
    VisualEncoder::Output visual;
    Memory memory;
    QueryBatch batch;
    DecoderOutput output;  // mask logits unset; see pixel map helpers
  };

  /// Runs encoder + decoder + box/score heads for one frame against the
  /// current track set (mask logits are produced separately).
  FrameResult run_frame(const Frame& frame, const TextEncoder::Output& text,
                        const std::vector<TrackState>& tracks) const;

  /// Fills result.output.mask_logits for all rows (training path).
  void add_masks_all_rows(FrameResult& result) const;

  /// Mask logits for a subset of rows (inference path).
  Tensor masks_for_rows(const FrameResult& result, const std::vector<int>& rows) const;

  const VisualEncoder& visual() const { return visual_; }
  const CrossModalEncoder& encoder() const { return encoder_; }
  const LanguageGuidedDecoder& decoder() const { return decoder_; }

  /// Named parameters in a stable order (checkpoint layout).
  ParamList parameters() const;
  /// Parameters of the convolutional backbone (separate learning rate).
  ParamList backbone_parameters() const;

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  TextEncoder text_;
  VisualEncoder visual_;
  CrossModalEncoder encoder_;
  LanguageGuidedDecoder decoder_;
};

}  // namespace reftrack
