#include "reftrack/model.hpp"

#include <stdexcept>

namespace reftrack {

Model::Model(const ModelConfig& cfg, const Vocabulary& vocab, Rng& rng)
    : cfg_(cfg), vocab_(vocab) {
  cfg_.validate();
  if (cfg_.vocab_size == 0) cfg_.vocab_size = vocab.size();
  if (cfg_.vocab_size != vocab.size()) {
    throw std::invalid_argument("model: config vocab_size " + std::to_string(cfg_.vocab_size) +
                                " does not match vocabulary of " + std::to_string(vocab.size()));
  }
  text_ = TextEncoder(cfg_.vocab_size, cfg_.d, rng);
  visual_ = VisualEncoder(cfg_.d, rng);
  encoder_ = CrossModalEncoder(cfg_.d, cfg_.enc_layers, cfg_.heads, rng);
  decoder_ = LanguageGuidedDecoder(cfg_, rng);
}

Model::FrameResult Model::run_frame(const Frame& frame, const TextEncoder::Output& text,
                                    const std::vector<TrackState>& tracks) const {
  FrameResult r;
  r.visual = visual_.encode(frame);
  r.memory = encoder_.encode(r.visual.stride8, text.words, !cfg_.disable_ice);
  r.batch = decoder_.build_queries(tracks, text.sentence, !cfg_.disable_lgd);
  Tensor embeddings = decoder_.decode(r.memory, r.batch);
  r.output = decoder_.predict(embeddings, r.batch.anchors);
  return r;
}

void Model::add_masks_all_rows(FrameResult& result) const {
  Tensor pixel_map = decoder_.pixel_embedding_map(result.visual.stride4, result.memory);
  result.output.mask_logits = decoder_.predict_masks(result.output.embeddings, pixel_map);
}

Tensor Model::masks_for_rows(const FrameResult& result, const std::vector<int>& rows) const {
  Tensor pixel_map = decoder_.pixel_embedding_map(result.visual.stride4, result.memory);
  return decoder_.predict_masks(gather_rows(result.output.embeddings, rows), pixel_map);
}

ParamList Model::parameters() const {
  ParamList out;
  text_.collect(out);
  visual_.collect(out);
  encoder_.collect(out);
  decoder_.collect(out);
  return out;
}

ParamList Model::backbone_parameters() const {
  ParamList out;
  visual_.collect(out);
  return out;
}

}  // namespace reftrack
