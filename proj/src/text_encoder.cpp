#include "reftrack/text_encoder.hpp"

#include <cctype>
#include <stdexcept>

namespace reftrack {

Vocabulary::Vocabulary() {
  id_to_token_ = {"<pad>", "<unk>"};
  token_to_id_ = {{"<pad>", kPad}, {"<unk>", kUnk}};
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const std::string& t : tokens) add(t);
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

Expression tokenize(const std::string& text, const Vocabulary& vocab) {
  bool any_content = false;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) any_content = true;
  }
  if (text.empty() || !any_content) {
    throw std::invalid_argument("tokenize: empty expression");
  }
  Expression expr;
  expr.raw = text;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      expr.token_ids.push_back(vocab.id(current));
      current.clear();
    }
  };
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  if (expr.token_ids.empty()) {
    throw std::invalid_argument("tokenize: expression has no tokens");
  }
  return expr;
}

TextEncoder::TextEncoder(int vocab_size, int d, Rng& rng)
    : word_proj_(d, d, rng), sentence_proj_(d, d, rng) {
  embed_ = Tensor::zeros({vocab_size, d}, true);
  init_fanin(embed_, d, rng);
}

TextEncoder::Output TextEncoder::encode(const Expression& expr) const {
  Tensor rows = embedding(embed_, expr.token_ids);
  Tensor words = word_proj_.forward(rows);
  Tensor pooled = mean_rows(words);  // permutation-invariant pre-projection
  Tensor sentence = reshape(sentence_proj_.forward(reshape(pooled, {1, pooled.dim(0)})),
                            {pooled.dim(0)});
  return {words, sentence};
}

void TextEncoder::collect(ParamList& out) const {
  out.push_back({"text.embed", embed_});
  word_proj_.collect("text.word_proj", out);
  sentence_proj_.collect("text.sentence_proj", out);
}

}  // namespace reftrack
