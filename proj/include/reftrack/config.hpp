#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace reftrack {

/// Architecture and inference settings carried inside every checkpoint.
struct ModelConfig {
  int d = 32;            // model dim; divisible by 8 and by heads
  int n_detect = 20;     // detect query count
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 4;         // visual/query self-attention heads
  double alpha = 0.8;    // content query update factor
  double beta_conf = 0.7;
  double beta_ref = 0.4;
  int miss_tolerance = 5;
  int frame_h = 64;
  int frame_w = 64;
  int vocab_size = 0;    // fixed once the vocabulary is known

  bool disable_ice = false;  // bypass cross-modal fusion in the encoder
  bool disable_lgd = false;  // skip sentence-feature injection into queries
  bool detach_propagation = false;

  void validate() const;
};

struct LossWeights {
  double cls = 5.0;
  double l1 = 2.0;
  double giou = 2.0;
  double ref = 2.0;
  double mask = 5.0;
  double dice = 5.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  void validate() const;
};

/// Everything needed to reproduce a training or ablation run.
struct RunConfig {
  ModelConfig model;
  LossWeights loss;

  std::string dataset;
  std::string out_dir = "run";
  int epochs = 12;
  int clip_len = 3;
  double lr_backbone = 4e-4;
  double lr_transformer = 8e-4;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  double flip_prob = 0.5;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // epochs; 0 = final only

  bool match_use_box = true;   // Eq.-style matching-cue toggles
  bool match_use_mask = true;

  void validate() const;
};

/// Flat "key = value" text config; '#' starts a comment.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> load_key_value_file(const std::string& path);

/// Applies known keys onto the config; unknown keys raise invalid_argument.
void apply_key_values(RunConfig& cfg, const std::map<std::string, std::string>& kv);

/// Canonical serialization (fixed key order, %.17g doubles); re-parsing it
/// reproduces the config exactly.
std::string to_key_values(const RunConfig& cfg);

std::string format_double(double v);  // %.17g, round-trip exact

}  // namespace reftrack
