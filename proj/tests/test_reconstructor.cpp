#include <random>

#include "doctest.h"
#include "tagrw/reconstructor.hpp"

using namespace tagrw;

namespace {

TagProgram identity_program(std::size_t utterance_len) {
  TagProgram p;
  p.tags.assign(utterance_len + 1, TokenTag{0, Span::none()});
  return p;
}

// Structurally valid but otherwise arbitrary program.
TagProgram fuzz_program(std::size_t utterance_len, const FlatContext& ctx,
                        std::mt19937_64& rng) {
  TagProgram p;
  for (std::size_t i = 0; i <= utterance_len; ++i) {
    TokenTag tag;
    tag.deletion = i < utterance_len && rng() % 2 == 0 ? 1 : 0;
    if (!ctx.tokens.empty() && rng() % 3 == 0) {
      int start = static_cast<int>(rng() % ctx.size());
      int turn = ctx.turn_ids[static_cast<std::size_t>(start)];
      int end = start;
      while (end + 1 < static_cast<int>(ctx.size()) &&
             ctx.turn_ids[static_cast<std::size_t>(end + 1)] == turn && rng() % 2 == 0)
        ++end;
      tag.insertion = Span{start, end};
    }
    p.tags.push_back(tag);
  }
  return p;
}

} // namespace

TEST_CASE("apply_tags") {
  FlatContext ctx = flatten_context({tokenize("上海 最近 天气 怎么样 ？", TokenMode::Word),
                                     tokenize("最近 经常 阴天 下雨 。", TokenMode::Word)});
  Tokens utterance = tokenize("冬天 就是 这样 。", TokenMode::Word);

  SUBCASE("worked program rebuilds the rewrite") {
    TagProgram p;
    p.tags = {TokenTag{0, Span{0, 0}}, TokenTag{0, Span::none()}, TokenTag{1, Span{6, 8}},
              TokenTag{0, Span::none()}, TokenTag{0, Span::none()}};
    CHECK(apply_tags(utterance, ctx, p) ==
          tokenize("上海 冬天 就是 经常 阴天 下雨 。", TokenMode::Word));
  }
  SUBCASE("identity program is a no-op") {
    CHECK(apply_tags(utterance, ctx, identity_program(utterance.size())) == utterance);
  }
  SUBCASE("annihilating program yields nothing") {
    TagProgram p = identity_program(utterance.size());
    for (std::size_t i = 0; i < utterance.size(); ++i) p.tags[i].deletion = 1;
    CHECK(apply_tags(utterance, ctx, p).empty());
  }
  SUBCASE("END insertion is terminal") {
    TagProgram p = identity_program(utterance.size());
    p.tags.back().insertion = Span{0, 0};
    Tokens out = apply_tags(utterance, ctx, p);
    REQUIRE(out.size() == utterance.size() + 1);
    CHECK(out.back() == "上海");
  }
  SUBCASE("structural errors throw") {
    TagProgram wrong_len = identity_program(utterance.size() + 1);
    CHECK_THROWS_AS(apply_tags(utterance, ctx, wrong_len), DataError);
    TagProgram bad_span = identity_program(utterance.size());
    bad_span.tags[0].insertion = Span{5, 99};
    CHECK_THROWS_AS(apply_tags(utterance, ctx, bad_span), DataError);
  }
}

TEST_CASE("validate_program") {
  FlatContext ctx = flatten_context({{"a", "b"}, {"c"}});
  SUBCASE("valid program") {
    TagProgram p = identity_program(2);
    p.tags[0].insertion = Span{0, 1};
    CHECK(validate_program(p, 2, ctx).empty());
  }
  SUBCASE("start > end") {
    TagProgram p = identity_program(1);
    p.tags[0].insertion.start = 5;
    p.tags[0].insertion.end = 3;
    auto v = validate_program(p, 1, ctx);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("start > end") != std::string::npos);
  }
  SUBCASE("length mismatch") {
    auto v = validate_program(identity_program(3), 1, ctx);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("length mismatch") != std::string::npos);
  }
  SUBCASE("END deletion bit") {
    TagProgram p = identity_program(1);
    p.tags.back().deletion = 1;
    auto v = validate_program(p, 1, ctx);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("END") != std::string::npos);
  }
  SUBCASE("turn-crossing span") {
    TagProgram p = identity_program(1);
    p.tags[0].insertion = Span{1, 2};
    auto v = validate_program(p, 1, ctx);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("turn") != std::string::npos);
  }
}

TEST_CASE("output length accounting and fuzzed execution") {
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 2000; ++iter) {
    std::vector<Tokens> turns;
    const int n_turns = 1 + static_cast<int>(rng() % 3);
    for (int t = 0; t < n_turns; ++t) {
      Tokens turn;
      const int len = 1 + static_cast<int>(rng() % 5);
      for (int k = 0; k < len; ++k) turn.push_back("c" + std::to_string(rng() % 9));
      turns.push_back(std::move(turn));
    }
    FlatContext ctx = flatten_context(turns);
    Tokens utterance;
    const int ulen = 1 + static_cast<int>(rng() % 6);
    for (int k = 0; k < ulen; ++k) utterance.push_back("u" + std::to_string(rng() % 9));

    TagProgram p = fuzz_program(utterance.size(), ctx, rng);
    REQUIRE(validate_program(p, utterance.size(), ctx).empty());
    Tokens out = apply_tags(utterance, ctx, p);

    std::size_t expected = 0;
    for (std::size_t i = 0; i < p.tags.size(); ++i) {
      expected += static_cast<std::size_t>(p.tags[i].insertion.length());
      if (i < utterance.size() && p.tags[i].deletion == 0) ++expected;
    }
    CHECK(out.size() == expected);
  }
}
