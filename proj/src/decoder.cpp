#include "reftrack/decoder.hpp"

#include <cmath>
#include <stdexcept>

#include "reftrack/visual_encoder.hpp"

namespace reftrack {

DecoderLayer::DecoderLayer(int d, int heads, Rng& rng)
    : self_attn(d, heads, rng),
      cross_attn(d, heads, rng),
      ln_self(d),
      ln_cross(d),
      ln_ffn(d),
      ffn(d, 4 * d, d, 2, rng) {}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& pos, const Tensor& memory,
                             const Tensor& memory_pos) const {
  Tensor h = x;
  Tensor norm = ln_self.forward(h);
  Tensor qk = add(norm, pos);
  h = add(h, self_attn.forward(qk, qk, norm));

  norm = ln_cross.forward(h);
  h = add(h, cross_attn.forward(add(norm, pos), add(memory, memory_pos), memory));

  h = add(h, ffn.forward(ln_ffn.forward(h)));
  return h;
}

void DecoderLayer::collect(const std::string& prefix, ParamList& out) const {
  self_attn.collect(prefix + ".self", out);
  cross_attn.collect(prefix + ".cross", out);
  ln_self.collect(prefix + ".ln_self", out);
  ln_cross.collect(prefix + ".ln_cross", out);
  ln_ffn.collect(prefix + ".ln_ffn", out);
  ffn.collect(prefix + ".ffn", out);
}

namespace {

double inverse_sigmoid_value(double p) {
  const double eps = 1e-6;
  p = std::clamp(p, eps, 1.0 - eps);
  return std::log(p / (1.0 - p));
}

}  // namespace

LanguageGuidedDecoder::LanguageGuidedDecoder(const ModelConfig& cfg, Rng& rng)
    : d_(cfg.d),
      n_detect_(cfg.n_detect),
      pos_embed_(cfg.d, cfg.d, cfg.d, 2, rng),
      box_head_(cfg.d, cfg.d, 4, 3, rng),
      conf_head_(cfg.d, 1, rng),
      ref_head_(cfg.d, 1, rng),
      seg_head_(cfg.d, cfg.d, cfg.d, 3, rng) {
  detect_content_ = Tensor::zeros({cfg.n_detect, cfg.d}, true);
  init_fanin(detect_content_, cfg.d, rng);

  // anchors start as a uniform grid of small boxes, stored in logit space
  detect_anchor_logits_ = Tensor::zeros({cfg.n_detect, 4}, true);
  int cols = 1;
  while (cols * cols < cfg.n_detect) ++cols;
  const int rows = (cfg.n_detect + cols - 1) / cols;
  for (int i = 0; i < cfg.n_detect; ++i) {
    const int r = i / cols;
    const int c = i % cols;
    double* row = detect_anchor_logits_.data() + static_cast<std::size_t>(i) * 4;
    row[0] = inverse_sigmoid_value((c + 0.5) / cols);
    row[1] = inverse_sigmoid_value((r + 0.5) / rows);
    row[2] = inverse_sigmoid_value(0.2);
    row[3] = inverse_sigmoid_value(0.2);
  }

  for (int i = 0; i < cfg.dec_layers; ++i) layers_.emplace_back(cfg.d, cfg.heads, rng);

  pixel_w_ = Tensor::zeros({1, 1, VisualEncoder::kStride4Channels, cfg.d}, true);
  init_fanin(pixel_w_, VisualEncoder::kStride4Channels, rng);
  pixel_b_ = Tensor::zeros({cfg.d}, true);

  // score heads start pessimistic so an untrained model emits nothing
  conf_head_.b.data()[0] = -2.0;
  ref_head_.b.data()[0] = -2.0;
}

QueryBatch LanguageGuidedDecoder::build_queries(const std::vector<TrackState>& tracks,
                                                const Tensor& sentence,
                                                bool inject_sentence) const {
  if (sentence.rank() != 1 || sentence.dim(0) != d_) {
    throw std::logic_error("build_queries: sentence feature must be [" + std::to_string(d_) +
                           "], got " + shape_str(sentence.shape()));
  }
  QueryBatch batch;
  batch.n_detect = n_detect_;
  batch.n_track = static_cast<int>(tracks.size());

  std::vector<Tensor> contents{detect_content_};
  std::vector<Tensor> anchors{sigmoid(detect_anchor_logits_)};
  for (const TrackState& t : tracks) {
    if (t.content.dim(0) != d_) {
      throw std::logic_error("build_queries: track content dim mismatch");
    }
    contents.push_back(reshape(t.content, {1, d_}));
    anchors.push_back(reshape(t.anchor, {1, 4}));
  }
  batch.content = concat_rows(contents);
  if (inject_sentence) batch.content = add_rows(batch.content, sentence);
  batch.anchors = concat_rows(anchors);

  batch.origins.assign(static_cast<std::size_t>(batch.rows()), RowOrigin::Detect);
  batch.track_ids.assign(static_cast<std::size_t>(batch.rows()), -1);
  for (int i = 0; i < batch.n_track; ++i) {
    batch.origins[static_cast<std::size_t>(n_detect_ + i)] = RowOrigin::Track;
    batch.track_ids[static_cast<std::size_t>(n_detect_ + i)] = tracks[static_cast<std::size_t>(i)].id;
  }
  return batch;
}

Tensor LanguageGuidedDecoder::decode(const Memory& memory, const QueryBatch& batch) const {
  if (memory.features.dim(1) != d_) {
    throw std::logic_error("decode: memory dim mismatch");
  }
  Tensor pos = pos_embed_.forward(box_sine_features(batch.anchors, d_));
  Tensor memory_pos = sine_position_2d(memory.h, memory.w, d_);
  Tensor x = batch.content;
  for (const DecoderLayer& layer : layers_) {
    x = layer.forward(x, pos, memory.features, memory_pos);
  }
  return x;
}

DecoderOutput LanguageGuidedDecoder::predict(const Tensor& embeddings,
                                             const Tensor& anchors) const {
  if (embeddings.dim(0) != anchors.dim(0)) {
    throw std::logic_error("predict: row count mismatch between embeddings and anchors");
  }
  DecoderOutput out;
  out.embeddings = embeddings;
  out.boxes = sigmoid(add(logit(anchors), box_head_.forward(embeddings)));
  out.conf_logits = conf_head_.forward(embeddings);
  out.ref_logits = ref_head_.forward(embeddings);
  const int rows = embeddings.dim(0);
  out.conf.resize(static_cast<std::size_t>(rows));
  out.ref.resize(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    out.conf[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-out.conf_logits.at({i, 0})));
    out.ref[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-out.ref_logits.at({i, 0})));
  }
  return out;
}

Tensor LanguageGuidedDecoder::pixel_embedding_map(const FeatureMap& stride4,
                                                  const Memory& memory) const {
  if (stride4.stride != 4) {
    throw std::logic_error("pixel map: expected the stride-4 feature map");
  }
  const int h4 = stride4.features.dim(0);
  const int w4 = stride4.features.dim(1);
  if (h4 != 2 * memory.h || w4 != 2 * memory.w) {
    throw std::logic_error("pixel map: stride-4 map " + shape_str(stride4.features.shape()) +
                           " does not cover twice the memory grid " + std::to_string(memory.h) +
                           "x" + std::to_string(memory.w));
  }
  Tensor adjusted = conv2d(stride4.features, pixel_w_, pixel_b_, 1);
  Tensor upsampled = upsample2x(reshape(memory.features, {memory.h, memory.w, d_}));
  return reshape(add(adjusted, upsampled), {h4 * w4, d_});
}

Tensor LanguageGuidedDecoder::predict_masks(const Tensor& embeddings,
                                            const Tensor& pixel_map) const {
  if (pixel_map.dim(1) != d_ || embeddings.dim(1) != d_) {
    throw std::logic_error("predict_masks: dim mismatch");
  }
  return matmul(seg_head_.forward(embeddings), transpose(pixel_map));
}

void LanguageGuidedDecoder::collect(ParamList& out) const {
  out.push_back({"dec.detect_content", detect_content_});
  out.push_back({"dec.detect_anchors", detect_anchor_logits_});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect("dec." + std::to_string(i), out);
  }
  pos_embed_.collect("dec.pos_embed", out);
  box_head_.collect("head.box", out);
  conf_head_.collect("head.conf", out);
  ref_head_.collect("head.ref", out);
  seg_head_.collect("head.seg", out);
  out.push_back({"head.pixel.w", pixel_w_});
  out.push_back({"head.pixel.b", pixel_b_});
}

}  // namespace reftrack
