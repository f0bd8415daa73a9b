#pragma once

#include <string>
#include <utility>
#include <vector>

#include "reftrack/config.hpp"
#include "reftrack/model.hpp"
#include "reftrack/nn.hpp"

namespace reftrack {

/// Versioned container: text header + raw little-endian float64 payloads.
/// save(load(x)) is byte-identical.
struct Checkpoint {
  int version = 1;
  ModelConfig model_config;
  std::vector<std::string> vocab_tokens;  // full id -> token list
  std::vector<std::pair<std::string, std::vector<double>>> params;
  AdamW::State opt;        // empty moment lists when untrained
  std::string rng_state;   // trainer engine, textual

  static Checkpoint from_model(const Model& model, const AdamW* opt = nullptr,
                               const std::string& rng_state = "");
  Model to_model() const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace reftrack
