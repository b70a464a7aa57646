#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "wasa/attacks.hpp"
#include "wasa/errors.hpp"
#include "wasa/generator.hpp"
#include "wasa/marking.hpp"
#include "wasa/trainer.hpp"

using namespace wasa;

namespace {

Vocab make_vocab(std::size_t words, std::size_t alphabet = 6) {
  std::vector<std::string> w(special::kNames, special::kNames + special::kCount);
  for (std::size_t i = special::kCount; i < words; ++i) w.push_back("w" + std::to_string(i));
  return Vocab(w, WatermarkAlphabet::standard(alphabet));
}

ModelConfig config_for(const Vocab& v, int embed = 16, int block = 32) {
  ModelConfig c;
  c.vocab_words = static_cast<int>(v.word_count());
  c.vocab_watermark = static_cast<int>(v.watermark_count());
  c.embed = embed;
  c.layers = 2;
  c.heads = 2;
  c.block = block;
  return c;
}

struct Scored {
  std::vector<std::size_t> seq;
  double score;
};

// Joint log-probability of every length-m sequence, from full forward passes.
std::vector<Scored> enumerate(const Parameters<double>& p, const Vocab& v, const std::vector<TokenId>& context,
                              std::size_t m) {
  const std::size_t n = v.watermark_count();
  std::size_t total = 1;
  for (std::size_t i = 0; i < m; ++i) total *= n;
  std::vector<Scored> out;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<std::size_t> seq(m);
    std::size_t x = code;
    for (std::size_t i = m; i-- > 0;) {
      seq[i] = x % n;
      x /= n;
    }
    auto ids = context;
    for (auto s : seq) ids.push_back(static_cast<TokenId>(v.word_count() + s));
    const auto trace = forward(p, std::span<const TokenId>(ids));
    double score = 0.0;
    for (std::size_t i = 0; i < trace.watermark_rows.size(); ++i) {
      const Eigen::RowVectorXd z = trace.watermark_logits.row(static_cast<Eigen::Index>(i));
      const double mx = z.maxCoeff();
      score += z(static_cast<Eigen::Index>(seq[i])) - mx - std::log((z.array() - mx).exp().sum());
    }
    out.push_back({seq, score});
  }
  std::stable_sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  return out;
}

// Hidden state fixed to e_0, so word logits are column 0 of the embedding.
Parameters<double> constant_logit_model(const Vocab& v, TokenId favourite, double wtm_logit) {
  auto p = init_parameters<double>(config_for(v), 1);
  p.final_gain.setZero();
  p.final_bias.setZero();
  p.final_bias(0, 0) = 1.0;
  p.token_embedding.col(0).setZero();
  p.token_embedding(favourite, 0) = 5.0;
  p.token_embedding(special::kWtm, 0) = wtm_logit;
  return p;
}

}  // namespace

TEST(Beam, EqualsExhaustiveEnumeration) {
  std::mt19937_64 rng(3);
  for (std::size_t alphabet = 2; alphabet <= 6; ++alphabet) {
    for (std::size_t m = 2; m <= 4; ++m) {
      const auto v = make_vocab(12, alphabet);
      const auto p = init_parameters<double>(config_for(v), rng());
      auto q = p;
      q.token_embedding *= 40.0;  // sharpen the random model so rankings are far from uniform
      std::vector<TokenId> context{special::kBos, 5, 6, 7, special::kWtm};
      std::size_t beams = 1;
      for (std::size_t i = 0; i < m; ++i) beams *= alphabet;
      const auto got = watermark_beam(q, v, context, m, static_cast<int>(beams), static_cast<int>(beams));
      auto expected = enumerate(q, v, context, m);
      ASSERT_EQ(got.size(), expected.size());
      for (std::size_t r = 0; r < got.size(); ++r) {
        ASSERT_EQ(got[r].watermark.size(), m);
        for (std::size_t i = 0; i < m; ++i) {
          EXPECT_EQ(got[r].watermark.chars[i], v.alphabet().at(expected[r].seq[i])) << "rank " << r;
        }
        EXPECT_NEAR(got[r].log_prob, expected[r].score, 1e-9);
        if (r) {
          EXPECT_LE(got[r].log_prob, got[r - 1].log_prob);
        }
      }
    }
  }
}

TEST(Beam, TopKContainment) {
  const auto v = make_vocab(12);
  const auto p = init_parameters<double>(config_for(v), 8);
  std::vector<TokenId> context{special::kBos, 5, special::kWtm};
  const auto one = watermark_beam(p, v, context, 10, 5, 1);
  const auto five = watermark_beam(p, v, context, 10, 5, 5);
  ASSERT_EQ(one.size(), 1u);
  ASSERT_EQ(five.size(), 5u);
  EXPECT_EQ(one[0].watermark, five[0].watermark);
  for (std::size_t r = 1; r < five.size(); ++r) EXPECT_LE(five[r].log_prob, five[r - 1].log_prob);
}

TEST(Beam, Preconditions) {
  const auto v = make_vocab(12);
  const auto p = init_parameters<double>(config_for(v), 8);
  std::vector<TokenId> no_wtm{special::kBos, 5};
  EXPECT_THROW(watermark_beam(p, v, no_wtm, 10, 5, 1), Error);
  std::vector<TokenId> context{special::kBos, special::kWtm};
  EXPECT_THROW(watermark_beam(p, v, context, 10, 2, 3), Error);
}

TEST(Generate, NoWatermarkWhenArgmaxAvoidsWtm) {
  const auto v = make_vocab(12);
  const auto p = constant_logit_model(v, 5, -10.0);
  GenConfig g;
  g.temperature = 1e-3;
  g.repetition_penalty = 1.0;
  g.max_new_tokens = 40;
  const auto out = generate(p, v, 10, "w4 w6", g);
  EXPECT_TRUE(out.watermarks.empty());
  EXPECT_TRUE(strip_watermarks(out.text, v.alphabet()).runs.empty());
  EXPECT_FALSE(out.forced);
  EXPECT_EQ(out.text.substr(0, 5), "w4 w6");
}

TEST(Generate, RunsHaveExactLengthAndMatchEmission) {
  const auto v = make_vocab(12);
  const auto p = constant_logit_model(v, 5, 10.0);
  GenConfig g;
  g.temperature = 1e-3;
  g.repetition_penalty = 1.0;
  g.max_new_tokens = 60;
  const auto out = generate(p, v, 10, "w7", g);
  const auto runs = strip_watermarks(out.text, v.alphabet()).runs;
  ASSERT_FALSE(runs.empty());
  ASSERT_EQ(runs.size(), out.watermarks.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    EXPECT_EQ(runs[i].codepoints.size(), 10u);
    EXPECT_EQ(runs[i].codepoints, out.watermarks[i].watermark.chars);
    // Nothing visible between the run and the word it follows.
    EXPECT_NE(runs[i].offset, 0u);
    EXPECT_NE(strip_watermarks(out.text, v.alphabet()).clean[runs[i].offset - 1], ' ');
  }
}

TEST(Generate, SeedDeterminism) {
  const auto v = make_vocab(30);
  const auto p = init_parameters<float>(config_for(v), 4);
  GenConfig g;
  g.seed = 77;
  const auto a = generate(p, v, 10, "w5 w6 w7", g);
  const auto b = generate(p, v, 10, "w5 w6 w7", g);
  EXPECT_EQ(a.text, b.text);
  g.seed = 78;
  EXPECT_NE(generate(p, v, 10, "w5 w6 w7", g).text, a.text);
}

TEST(Generate, LongGenerationReprimes) {
  const auto v = make_vocab(30);
  const auto p = init_parameters<float>(config_for(v, 16, 16), 4);
  GenConfig g;
  g.max_new_tokens = 100;
  const auto out = generate(p, v, 10, "w5", g);
  EXPECT_FALSE(out.continuation.empty());
  for (const auto& run : strip_watermarks(out.text, v.alphabet()).runs) EXPECT_EQ(run.codepoints.size(), 10u);
}

TEST(Generate, PromptTooLong) {
  const auto v = make_vocab(12);
  const auto p = init_parameters<float>(config_for(v), 4);
  std::string prompt;
  for (int i = 0; i < 40; ++i) prompt += "w5 ";
  try {
    generate(p, v, 10, prompt, GenConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PromptTooLong);
  }
  EXPECT_THROW(enforce_watermark(p, v, 10, prompt, 5), Error);
  EXPECT_EQ(enforce_watermark(p, v, 10, prompt, 5, 1, ContextPolicy::KeepTail).front().watermark.size(), 10u);
}

class Memorized : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    vocab_ = new Vocab(make_vocab(20));
    const auto c = config_for(*vocab_, 32, 32);
    params_ = new Parameters<float>(init_parameters<float>(c, 4));
    std::mt19937_64 rng(5);
    watermark_ = new Watermark();
    for (int i = 0; i < 10; ++i) watermark_->chars.push_back(vocab_->alphabet().at((i * 7 + 3) % 6));
    std::vector<Block> blocks;
    for (int b = 0; b < 250; ++b) {
      std::string text;
      for (int i = 0; i < 30; ++i) {
        text += "w" + std::to_string(4 + rng() % 16);
        if (rng() % 12 == 0) text += watermark_->to_utf8();
        text += " ";
      }
      const std::vector<TokenStream> streams{vocab_->encode(text)};
      for (auto& block : pack_blocks(streams, 32, *vocab_)) blocks.push_back(std::move(block));
    }
    TrainConfig t;
    t.learning_rate = 2e-3;
    train(*params_, std::span<const Block>(blocks), t);
  }
  static void TearDownTestSuite() {
    delete vocab_;
    delete params_;
    delete watermark_;
  }
  static Vocab* vocab_;
  static Parameters<float>* params_;
  static Watermark* watermark_;
};

Vocab* Memorized::vocab_ = nullptr;
Parameters<float>* Memorized::params_ = nullptr;
Watermark* Memorized::watermark_ = nullptr;

TEST_F(Memorized, BeamRecoversProviderWatermark) {
  std::vector<TokenId> context{special::kBos, 7, 8, 9, special::kWtm};
  const auto best = watermark_beam(*params_, *vocab_, context, 10, 5, 1);
  EXPECT_EQ(best.front().watermark, *watermark_);
}

TEST_F(Memorized, EnforcedEqualsNaturalWatermark) {
  GenConfig g;
  g.max_new_tokens = 20;
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    g.seed = seed;
    const auto out = generate(*params_, *vocab_, 10, "w5 w6 w7", g);
    if (out.watermarks.empty()) continue;
    // Forcing on the text that preceded the first run reproduces that run.
    const auto stripped = strip_watermarks(out.text, vocab_->alphabet());
    const auto prefix = stripped.clean.substr(0, stripped.runs.front().offset);
    const auto forced = enforce_watermark(*params_, *vocab_, 10, prefix, g.beam_size);
    EXPECT_EQ(forced.front().watermark, out.watermarks.front().watermark);
    ++compared;
  }
  EXPECT_GT(compared, 0);
}

TEST_F(Memorized, RegenerationDefense) {
  const std::string marked = "w5 w6" + watermark_->to_utf8() + " w7 w8";
  const auto regenerated = regenerate_defense(*params_, *vocab_, 10, marked, 5);
  EXPECT_EQ(regenerated.front().watermark, *watermark_);
  const auto removed = attack_watermark(marked, vocab_->alphabet(), AttackMode::Remove, 0.0, 1);
  EXPECT_EQ(regenerate_defense(*params_, *vocab_, 10, removed, 5).front().watermark.size(), 10u);
  const auto modified = attack_watermark(marked, vocab_->alphabet(), AttackMode::Modify, 1.0, 1);
  EXPECT_EQ(regenerate_defense(*params_, *vocab_, 10, modified, 5).front().watermark,
            regenerate_defense(*params_, *vocab_, 10, "w5 w6 w7 w8", 5).front().watermark);
}
