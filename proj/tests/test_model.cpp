#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wasa/errors.hpp"
#include "wasa/model.hpp"
#include "wasa/tokenizer.hpp"

using namespace wasa;

namespace {

ModelConfig toy_config(int words = 14, int wm = 6, int embed = 16, int layers = 2, int heads = 2, int block = 16) {
  ModelConfig c;
  c.vocab_words = words;
  c.vocab_watermark = wm;
  c.embed = embed;
  c.layers = layers;
  c.heads = heads;
  c.block = block;
  return c;
}

// A block of word tokens with watermark runs ([WTM] + m codepoints) at random places.
std::vector<TokenId> random_block(const ModelConfig& c, std::mt19937_64& rng, std::size_t m = 3) {
  std::vector<TokenId> ids;
  const auto T = static_cast<std::size_t>(c.block);
  while (ids.size() < T) {
    if (ids.size() + m + 1 <= T && rng() % 5 == 0) {
      ids.push_back(special::kWtm);
      for (std::size_t i = 0; i < m; ++i) ids.push_back(c.vocab_words + static_cast<TokenId>(rng() % c.vocab_watermark));
    } else {
      ids.push_back(static_cast<TokenId>(special::kCount + rng() % (c.vocab_words - special::kCount)));
    }
  }
  return ids;
}

template <typename Scalar>
double total_loss(const Parameters<Scalar>& p, std::span<const TokenId> ids) {
  return loss(forward(p, ids)).total;
}

}  // namespace

TEST(Init, DeterministicShapesFinite) {
  const auto c = toy_config();
  const auto a = init_parameters<float>(c, 5);
  const auto b = init_parameters<float>(c, 5);
  EXPECT_EQ(a.token_embedding.rows(), c.vocab_words + c.vocab_watermark);
  EXPECT_EQ(a.token_embedding.cols(), c.embed);
  EXPECT_EQ(a.position_embedding.rows(), c.block);
  EXPECT_TRUE(a.all_finite());
  std::vector<const Matrix<float>*> ta, tb;
  a.visit([&](const std::string&, const Matrix<float>& m) { ta.push_back(&m); });
  b.visit([&](const std::string&, const Matrix<float>& m) { tb.push_back(&m); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_TRUE((*ta[i]).cwiseEqual(*tb[i]).all());
  const auto d = init_parameters<float>(c, 6);
  EXPECT_FALSE(d.token_embedding.cwiseEqual(a.token_embedding).all());
}

TEST(Config, Validation) {
  auto c = toy_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = toy_config();
  c.frozen_layers = 3;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Forward, RoutingAndNormalization) {
  const auto c = toy_config();
  const auto p = init_parameters<double>(c, 1);
  std::vector<TokenId> ids{5, 6, 7, special::kWtm, 14, 15, 16, 8, 9};
  const auto trace = forward(p, ids);
  EXPECT_EQ(trace.watermark_rows.size(), 3u);
  EXPECT_EQ(trace.word_rows.size(), ids.size() - 1 - 3);
  EXPECT_EQ(trace.watermark_rows, (std::vector<int>{3, 4, 5}));
  for (Eigen::Index r = 0; r < trace.word_probs.rows(); ++r) EXPECT_NEAR(trace.word_probs.row(r).sum(), 1.0, 1e-6);
  for (Eigen::Index r = 0; r < trace.watermark_probs.rows(); ++r) {
    EXPECT_NEAR(trace.watermark_probs.row(r).sum(), 1.0, 1e-6);
  }
  std::vector<TokenId> words{5, 6, 7, 8};
  const auto all_words = forward(p, words);
  EXPECT_EQ(all_words.word_rows.size(), 3u);
  EXPECT_TRUE(all_words.watermark_rows.empty());
}

TEST(Forward, PadTargetsProduceNoLogits) {
  const auto c = toy_config();
  const auto p = init_parameters<double>(c, 1);
  std::vector<TokenId> ids{5, 6, special::kPad, special::kPad};
  const auto trace = forward(p, ids);
  EXPECT_EQ(trace.word_rows, (std::vector<int>{0}));
}

TEST(Forward, Errors) {
  const auto c = toy_config();
  const auto p = init_parameters<double>(c, 1);
  std::vector<TokenId> too_long(static_cast<std::size_t>(c.block + 1), 5);
  EXPECT_THROW(forward(p, too_long), Error);
  std::vector<TokenId> bad{5, 99};
  EXPECT_THROW(forward(p, bad), Error);
}

TEST(Forward, UntrainedWatermarkHeadNearUniform) {
  const auto c = toy_config();
  double deviation = 0.0;
  int count = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = init_parameters<double>(c, seed);
    std::mt19937_64 rng(seed);
    const auto ids = random_block(c, rng);
    const auto trace = forward(p, ids);
    for (Eigen::Index r = 0; r < trace.watermark_probs.rows(); ++r) {
      deviation += (trace.watermark_probs.row(r).array() - 1.0 / 6.0).abs().mean();
      ++count;
    }
  }
  ASSERT_GT(count, 0);
  EXPECT_LT(deviation / count, 0.05);
}

TEST(Forward, Causality) {
  const auto c = toy_config();
  const auto p = init_parameters<double>(c, 2);
  std::vector<TokenId> a{5, 6, 7, 8, 9, 10, 11, 12};
  auto b = a;
  b[6] = 13;
  const auto ta = forward(p, a);
  const auto tb = forward(p, b);
  for (int j = 0; j < 6; ++j) EXPECT_TRUE(ta.hidden.row(j) == tb.hidden.row(j));
  EXPECT_FALSE(ta.hidden.row(6) == tb.hidden.row(6));
}

TEST(Loss, NoRunMeansNoWatermarkLoss) {
  const auto c = toy_config();
  const auto p = init_parameters<double>(c, 3);
  std::vector<TokenId> ids{5, 6, 7, 8, 9};
  const auto l = loss(forward(p, ids));
  EXPECT_EQ(l.wtm, 0.0);
  EXPECT_EQ(l.total, l.lm);
  EXPECT_EQ(l.watermark_targets, 0u);
}

TEST(Loss, UniformLogits) {
  const auto c = toy_config();
  auto p = init_parameters<double>(c, 3);
  p.token_embedding.setZero();
  std::vector<TokenId> ids{5, special::kWtm, 14, 15, 16, 6};
  const auto l = loss(forward(p, ids));
  EXPECT_NEAR(l.wtm, std::log(6.0), 1e-3);
  EXPECT_NEAR(l.lm, std::log(14.0), 1e-9);
}

TEST(Loss, HandComputedCrossEntropy) {
  // Two positions: one word target, one watermark target. CE from the trace's
  // logits computed here with an independent log-sum-exp.
  const auto c = toy_config();
  const auto p = init_parameters<double>(c, 4);
  std::vector<TokenId> ids{special::kWtm, 17, 9};
  const auto trace = forward(p, ids);
  ASSERT_EQ(trace.watermark_rows.size(), 1u);
  ASSERT_EQ(trace.word_rows.size(), 1u);
  auto ce = [](const Eigen::RowVectorXd& z, int target) {
    const double mx = z.maxCoeff();
    return std::log((z.array() - mx).exp().sum()) + mx - z(target);
  };
  const double wtm = ce(trace.watermark_logits.row(0), 17 - c.vocab_words);
  const double lm = ce(trace.word_logits.row(0), 9);
  const auto l = loss(trace);
  EXPECT_NEAR(l.wtm, wtm, 1e-12);
  EXPECT_NEAR(l.lm, lm, 1e-12);
  EXPECT_NEAR(l.total, wtm + lm, 1e-12);
}

TEST(Backward, LogitGradientBlocksExactlyZero) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 100; ++t) {
    const auto c = toy_config(10 + static_cast<int>(rng() % 10), 2 + static_cast<int>(rng() % 5));
    const auto p = init_parameters<double>(c, rng());
    const auto ids = random_block(c, rng, 1 + rng() % 4);
    const auto trace = forward(p, ids);
    const auto g = backward(p, trace).logit_grad;
    const int V = c.vocab_words;
    const int Vw = c.vocab_watermark;
    for (int r : trace.word_rows) {
      EXPECT_TRUE((g.row(r).segment(V, Vw).array() == 0.0).all());
      EXPECT_TRUE((g.row(r).segment(0, V).array() != 0.0).any());
    }
    for (int r : trace.watermark_rows) {
      EXPECT_TRUE((g.row(r).segment(0, V).array() == 0.0).all());
      EXPECT_TRUE((g.row(r).segment(V, Vw).array() != 0.0).any());
    }
  }
}

TEST(Backward, MatchesCentralFiniteDifferences) {
  const auto c = toy_config(12, 6, 16, 2, 2, 16);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = init_parameters<double>(c, rng());
    // Larger weights than the default init so every path carries signal.
    auto q = p;
    q.visit([&](const std::string& name, Matrix<double>& m) {
      std::normal_distribution<double> n(0.0, name.find("gain") != std::string::npos ? 0.1 : 0.3);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += n(rng);
    });
    const auto ids = random_block(c, rng, 3);
    const auto grads = backward(q, forward(q, ids)).grads;

    std::vector<Matrix<double>*> params;
    q.visit([&](const std::string&, Matrix<double>& m) { params.push_back(&m); });
    std::vector<const Matrix<double>*> analytic;
    grads.visit([&](const std::string&, const Matrix<double>& m) { analytic.push_back(&m); });
    std::vector<std::string> names;
    q.visit([&](const std::string& n, Matrix<double>&) { names.push_back(n); });

    const double h = 1e-5;
    for (std::size_t t = 0; t < params.size(); ++t) {
      Matrix<double> numeric(params[t]->rows(), params[t]->cols());
      for (Eigen::Index i = 0; i < params[t]->size(); ++i) {
        double& x = params[t]->data()[i];
        const double saved = x;
        x = saved + h;
        const double up = total_loss(q, ids);
        x = saved - h;
        const double down = total_loss(q, ids);
        x = saved;
        numeric.data()[i] = (up - down) / (2 * h);
      }
      const double err = (numeric - *analytic[t]).norm() / std::max(numeric.norm() + analytic[t]->norm(), 1e-12);
      EXPECT_LT(err, 1e-4) << names[t];
    }
  }
}

TEST(Backward, FrozenLayersGetZeroGradients) {
  auto c = toy_config();
  c.frozen_layers = 2;
  const auto p = init_parameters<double>(c, 7);
  std::mt19937_64 rng(7);
  const auto ids = random_block(c, rng);
  const auto g = backward(p, forward(p, ids)).grads;
  for (const auto& layer : g.layers) {
    EXPECT_EQ(layer.attn_qkv.norm(), 0.0);
    EXPECT_EQ(layer.mlp_out.norm(), 0.0);
    EXPECT_EQ(layer.ln1_gain.norm(), 0.0);
  }
  EXPECT_GT(g.token_embedding.norm(), 0.0);
  EXPECT_GT(g.position_embedding.norm(), 0.0);
  EXPECT_GT(g.final_gain.norm(), 0.0);
}

TEST(Decoder, IncrementalMatchesFullForward) {
  const auto c = toy_config(20, 6, 16, 2, 4, 16);
  const auto p = init_parameters<double>(c, 12);
  std::vector<TokenId> ids;
  for (int i = 0; i < c.block; ++i) ids.push_back(4 + i % 16);
  const auto trace = forward(p, ids);
  DecoderState<double> state(p);
  for (std::size_t j = 0; j + 1 < ids.size(); ++j) {
    state.push(ids[j]);
    EXPECT_LT((state.word_logits() - trace.word_logits.row(static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff(),
              1e-10);
  }
  std::vector<TokenId> with_run{5, 6, special::kWtm, 20, 21, 22, 7};
  const auto t2 = forward(p, with_run);
  DecoderState<double> s2(p);
  for (int j = 0; j < 5; ++j) s2.push(with_run[static_cast<std::size_t>(j)]);
  EXPECT_LT((s2.watermark_logits() - t2.watermark_logits.row(2)).cwiseAbs().maxCoeff(), 1e-10);
  state.push(ids.back());
  EXPECT_TRUE(state.full());
  EXPECT_THROW(state.push(5), Error);
}

TEST(Decoder, FloatAgreesWithDouble) {
  const auto c = toy_config();
  const auto pd = init_parameters<double>(c, 13);
  const auto pf = pd.cast<float>();
  std::vector<TokenId> ids{5, 6, 7, 8, 9, 10};
  const auto td = forward(pd, ids);
  const auto tf = forward(pf, ids);
  EXPECT_LT((td.word_logits.cast<float>() - tf.word_logits).cwiseAbs().maxCoeff(), 1e-4f);
}
