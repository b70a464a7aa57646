#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "wasa/attacks.hpp"
#include "wasa/errors.hpp"
#include "wasa/marking.hpp"

using namespace wasa;

namespace {

const WatermarkAlphabet kAlpha = WatermarkAlphabet::standard();

Watermark known_watermark() {
  Watermark w;
  for (int i = 0; i < 10; ++i) w.chars.push_back(kAlpha.at(static_cast<std::size_t>(i * 5 % 6)));
  return w;
}

std::string marked_text() {
  return "the quick brown" + known_watermark().to_utf8() + " fox jumps over the lazy dog again today";
}

std::size_t word_count(const std::string& text) {
  std::istringstream in(strip_watermarks(text, kAlpha).clean);
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

std::size_t visible_chars(const std::string& text) {
  return decode_utf8(strip_watermarks(text, kAlpha).clean).size();
}

Lexicon test_lexicon() { return Lexicon::parse("# comment\nbig\tlarge\nquick\tfast,rapid\n"); }

}  // namespace

TEST(WatermarkAttack, Remove) {
  const auto out = attack_watermark(marked_text(), kAlpha, AttackMode::Remove, 0.0, 1);
  EXPECT_TRUE(strip_watermarks(out, kAlpha).runs.empty());
  EXPECT_EQ(out, strip_watermarks(marked_text(), kAlpha).clean);
}

TEST(WatermarkAttack, ModifyRates) {
  EXPECT_EQ(attack_watermark(marked_text(), kAlpha, AttackMode::Modify, 0.0, 3), marked_text());
  const auto out = attack_watermark(marked_text(), kAlpha, AttackMode::Modify, 1.0, 3);
  const auto runs = strip_watermarks(out, kAlpha).runs;
  ASSERT_EQ(runs.size(), 1u);
  const auto w = known_watermark();
  ASSERT_EQ(runs[0].codepoints.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NE(runs[0].codepoints[i], w.chars[i]);
  EXPECT_EQ(hamming_distance(runs[0].codepoints, w.chars), w.size());
  EXPECT_EQ(strip_watermarks(out, kAlpha).clean, strip_watermarks(marked_text(), kAlpha).clean);
}

TEST(WatermarkAttack, ModifyFrequencyMatchesRate) {
  std::string text = "a";
  for (int i = 0; i < 2000; ++i) text += encode_utf8(std::vector<Codepoint>{kAlpha.at(0)});
  const auto out = attack_watermark(text, kAlpha, AttackMode::Modify, 0.3, 9);
  std::size_t changed = 0;
  const auto runs = strip_watermarks(out, kAlpha).runs;
  ASSERT_EQ(runs.size(), 1u);
  for (Codepoint cp : runs[0].codepoints) changed += cp != kAlpha.at(0);
  EXPECT_NEAR(changed / 2000.0, 0.3, 0.04);
}

TEST(WordAttack, DeleteZeroIsIdentity) {
  EXPECT_EQ(attack_words(marked_text(), kAlpha, AttackMode::Delete, 0.0, nullptr, 1), marked_text());
}

TEST(WordAttack, InsertDispersedCeil) {
  const std::string ten = "one two three four five six seven eight nine ten";
  const auto lex = test_lexicon();
  const auto out = attack_words(ten, kAlpha, AttackMode::Insert, 0.2, &lex, 5);
  EXPECT_EQ(word_count(out), 12u);
  const auto localized = attack_words(ten, kAlpha, AttackMode::InsertLocalized, 0.9, &lex, 5);
  EXPECT_EQ(word_count(localized), 11u);
  EXPECT_EQ(word_count(attack_words(ten, kAlpha, AttackMode::Insert, 0.25, &lex, 5)), 13u);
}

TEST(WordAttack, DeleteCeil) {
  const auto out = attack_words(marked_text(), kAlpha, AttackMode::Delete, 0.25, nullptr, 7);
  EXPECT_EQ(word_count(out), 11u - 3u);
}

TEST(WordAttack, SynonymEligibility) {
  const auto lex = test_lexicon();
  EXPECT_EQ(attack_words("a big cat", kAlpha, AttackMode::Synonym, 1.0, &lex, 1), "a large cat");
  try {
    attack_words("a big cat", kAlpha, AttackMode::Synonym, 1.0, nullptr, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingLexicon);
  }
}

TEST(WordAttack, RunsNeverAltered) {
  const auto lex = test_lexicon();
  const auto original = strip_watermarks(marked_text(), kAlpha).runs;
  for (auto mode : {AttackMode::Insert, AttackMode::InsertLocalized, AttackMode::Delete, AttackMode::Synonym}) {
    for (double s : {0.1, 0.5, 1.0}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto out = attack_words(marked_text(), kAlpha, mode, s, &lex, seed);
        const auto runs = strip_watermarks(out, kAlpha).runs;
        ASSERT_EQ(runs.size(), original.size());
        EXPECT_EQ(runs[0].codepoints, original[0].codepoints);
        EXPECT_EQ(out, attack_words(marked_text(), kAlpha, mode, s, &lex, seed));
      }
    }
  }
}

TEST(CharAttack, ZeroIsIdentity) {
  for (auto mode : {AttackMode::Insert, AttackMode::Delete, AttackMode::Swap}) {
    EXPECT_EQ(attack_chars(marked_text(), kAlpha, mode, 0.0, 1), marked_text());
  }
}

TEST(CharAttack, DeleteCount) {
  const std::string twenty = "abcdefghij" + known_watermark().to_utf8() + "klmnopqrst";
  const auto out = attack_chars(twenty, kAlpha, AttackMode::Delete, 0.1, 4);
  EXPECT_EQ(visible_chars(out), 18u);
  EXPECT_EQ(strip_watermarks(out, kAlpha).runs.front().codepoints, known_watermark().chars);
  const auto ins = attack_chars(twenty, kAlpha, AttackMode::Insert, 0.1, 4);
  EXPECT_EQ(visible_chars(ins), 22u);
}

TEST(CharAttack, SwapKeepsRunsAndMultiset) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = attack_chars(marked_text(), kAlpha, AttackMode::Swap, 0.3, seed);
    const auto a = strip_watermarks(out, kAlpha);
    const auto b = strip_watermarks(marked_text(), kAlpha);
    ASSERT_EQ(a.runs.size(), 1u);
    EXPECT_EQ(a.runs[0].codepoints, b.runs[0].codepoints);
    auto sa = a.clean, sb = b.clean;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    EXPECT_EQ(sa, sb);
  }
  EXPECT_THROW(attack_chars("a", kAlpha, AttackMode::Swap, 1.0, 1), Error);
}

TEST(CharAttack, WatermarkFamilyKeepsVisibleText) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto out = attack_watermark(marked_text(), kAlpha, AttackMode::Modify, 0.5, seed);
    EXPECT_EQ(strip_watermarks(out, kAlpha).clean, strip_watermarks(marked_text(), kAlpha).clean);
  }
}

TEST(AttackSpec, JsonRoundtripAndValidation) {
  const auto spec = AttackSpec::from_json(
      R"({"target":"generated_text","family":"word","mode":"insert","placement":"localized","strength":0.2,"seed":4})");
  EXPECT_EQ(spec.mode, AttackMode::InsertLocalized);
  EXPECT_EQ(spec.family, AttackFamily::Word);
  const auto again = AttackSpec::from_json(spec.to_json());
  EXPECT_EQ(again.mode, spec.mode);
  EXPECT_EQ(again.strength, spec.strength);
  EXPECT_EQ(again.seed, spec.seed);
  EXPECT_THROW(AttackSpec::from_json(R"({"family":"watermark","mode":"swap"})"), Error);
  EXPECT_THROW(AttackSpec::from_json(R"({"family":"char","mode":"delete","strength":1.5})"), Error);
  EXPECT_THROW(AttackSpec::from_json("not json"), Error);
  const auto prompt = AttackSpec::from_json(R"({"target":"prompt","family":"char","mode":"swap","strength":0.1})");
  EXPECT_EQ(prompt.target, AttackTarget::Prompt);
  EXPECT_EQ(apply_attack("hello world", kAlpha, prompt, nullptr),
            attack_chars("hello world", kAlpha, AttackMode::Swap, 0.1, 0));
}

TEST(Lexicon, ParseAndSerialize) {
  const auto lex = test_lexicon();
  ASSERT_EQ(lex.synonyms.size(), 2u);
  EXPECT_EQ(lex.synonyms.at("quick"), (std::vector<std::string>{"fast", "rapid"}));
  const auto again = Lexicon::parse(lex.serialize());
  EXPECT_EQ(again.synonyms, lex.synonyms);
}
