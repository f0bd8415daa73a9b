#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "reftrack/text_encoder.hpp"

using namespace reftrack;

namespace {

Vocabulary small_vocab() { return Vocabulary({"red", "car", "moving", "left"}); }

}  // namespace

TEST_CASE("tokenize looks up known tokens") {
  Vocabulary v = small_vocab();
  Expression e = tokenize("red car", v);
  CHECK(e.token_ids == std::vector<int>{v.id("red"), v.id("car")});
}

TEST_CASE("tokenize folds case") {
  Vocabulary v = small_vocab();
  CHECK(tokenize("RED car", v).token_ids == tokenize("red car", v).token_ids);
}

TEST_CASE("tokenize maps unknown tokens to UNK") {
  Vocabulary v = small_vocab();
  Expression e = tokenize("red zeppelin", v);
  CHECK(e.token_ids == std::vector<int>{v.id("red"), Vocabulary::kUnk});
}

TEST_CASE("tokenize splits on punctuation and rejects empty input") {
  Vocabulary v = small_vocab();
  CHECK(tokenize("red, car!", v).token_ids.size() == 2);
  CHECK_THROWS_AS(tokenize("", v), std::invalid_argument);
  CHECK_THROWS_AS(tokenize("   ", v), std::invalid_argument);
}

TEST_CASE("vocabulary ids are stable and bijective over known tokens") {
  Vocabulary v = small_vocab();
  for (int i = 0; i < v.size(); ++i) CHECK(v.id(v.token(i)) == i);
  CHECK(v.id("unseen") == Vocabulary::kUnk);
  const int before = v.size();
  v.add("red");
  CHECK(v.size() == before);
}

TEST_CASE("encode produces contract shapes") {
  Vocabulary v({"a", "b", "c", "d", "e"});
  Rng rng(3);
  TextEncoder enc(v.size(), 16, rng);

  Expression one = tokenize("a", v);
  auto out1 = enc.encode(one);
  CHECK(out1.words.shape() == Shape{1, 16});
  CHECK(out1.sentence.shape() == Shape{16});

  Expression five = tokenize("a b c d e", v);
  auto out5 = enc.encode(five);
  CHECK(out5.words.shape() == Shape{5, 16});
  CHECK(out5.sentence.shape() == Shape{16});
}

TEST_CASE("sentence pre-projection mean is permutation invariant") {
  Vocabulary v({"red", "car", "moving", "left"});
  Rng rng(9);
  TextEncoder enc(v.size(), 16, rng);

  auto fw1 = enc.encode(tokenize("red car moving left", v)).words;
  auto fw2 = enc.encode(tokenize("left moving car red", v)).words;
  Tensor m1 = mean_rows(fw1);
  Tensor m2 = mean_rows(fw2);
  for (int i = 0; i < 16; ++i) {
    CHECK(m1.data()[i] == doctest::Approx(m2.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("encode is deterministic given weights and ids") {
  Vocabulary v = small_vocab();
  Rng rng(4);
  TextEncoder enc(v.size(), 8, rng);
  Expression e = tokenize("red moving left", v);
  auto a = enc.encode(e);
  auto b = enc.encode(e);
  for (std::size_t i = 0; i < a.words.numel(); ++i) CHECK(a.words.data()[i] == b.words.data()[i]);
  for (int i = 0; i < 8; ++i) CHECK(a.sentence.data()[i] == b.sentence.data()[i]);
}

TEST_CASE("gradients reach the embedding table") {
  Vocabulary v = small_vocab();
  Rng rng(5);
  TextEncoder enc(v.size(), 8, rng);
  ParamList params;
  enc.collect(params);
  Tensor embed;
  for (auto& p : params) {
    if (p.name == "text.embed") embed = p.tensor;
  }
  REQUIRE(embed.valid());

  auto out = enc.encode(tokenize("red car", v));
  backward(sum(mul(out.sentence, out.sentence)));
  double norm = 0.0;
  for (std::size_t i = 0; i < embed.numel(); ++i) norm += std::abs(embed.grad()[i]);
  CHECK(norm > 0.0);
}

TEST_CASE("encode rejects out-of-range ids") {
  Vocabulary v = small_vocab();
  Rng rng(6);
  TextEncoder enc(v.size(), 8, rng);
  Expression bad{"x", {v.size() + 2}};
  CHECK_THROWS_AS(enc.encode(bad), std::logic_error);
}
