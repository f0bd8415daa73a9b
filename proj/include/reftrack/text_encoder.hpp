#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "reftrack/nn.hpp"
#include "reftrack/tensor.hpp"

namespace reftrack {

/// Token table with reserved padding (0) and unknown (1) ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int add(const std::string& token);      // idempotent
  int id(const std::string& token) const;  // kUnk when missing
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// A referring expression after tokenization.
struct Expression {
  std::string raw;
  std::vector<int> token_ids;  // nonempty
};

/// Lowercased split on whitespace/punctuation; unknown tokens map to UNK.
Expression tokenize(const std::string& text, const Vocabulary& vocab);

/// Embedding + projection producing word-level features F_w [N x d] and a
/// sentence-level feature F_s [d] (projected mean of the word rows).
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(int vocab_size, int d, Rng& rng);

  struct Output {
    Tensor words;     // [N x d]
    Tensor sentence;  // [d]
  };
  Output encode(const Expression& expr) const;

  void collect(ParamList& out) const;

 private:
  Tensor embed_;  // [V x d]
  Linear word_proj_;
  Linear sentence_proj_;
};

}  // namespace reftrack
