#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "wasa/errors.hpp"
#include "wasa/marking.hpp"

using namespace wasa;

namespace {

const WatermarkAlphabet kAlpha = WatermarkAlphabet::standard();

Watermark random_watermark(std::mt19937_64& rng, std::size_t m = 10) {
  Watermark w;
  for (std::size_t i = 0; i < m; ++i) w.chars.push_back(kAlpha.at(rng() % kAlpha.size()));
  return w;
}

std::string random_sentence(std::mt19937_64& rng) {
  static const char* words[] = {"alpha", "beta", "gamma", "delta", "é", "日本", "x", "zeta"};
  std::string s;
  const std::size_t n = 1 + rng() % 12;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += (rng() % 5 == 0) ? "  " : " ";
    s += words[rng() % 8];
  }
  return s + ".";
}

Registry registry_for(const std::vector<ProviderId>& names, std::uint64_t seed = 1) {
  return Registry::create(names, 10, kAlpha, seed);
}

}  // namespace

TEST(Segment, Examples) {
  const auto two = segment_sentences("A b. C d!");
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].text, "A b.");
  EXPECT_EQ(two[1].text, "C d!");
  EXPECT_EQ(two[1].begin, 5u);
  const auto one = segment_sentences("no terminator here");
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].text, "no terminator here");
  EXPECT_TRUE(segment_sentences("").empty());
  EXPECT_EQ(segment_sentences("e.g. this splits").size(), 2u);
}

TEST(Segment, SpansCoverNonWhitespace) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    std::string doc = "  ";
    for (int i = 0; i < 4; ++i) doc += random_sentence(rng) + (i % 2 ? "\n" : " ");
    const auto sentences = segment_sentences(doc);
    std::size_t last = 0;
    std::string covered(doc.size(), ' ');
    for (const auto& s : sentences) {
      EXPECT_GE(s.begin, last);
      EXPECT_EQ(doc.substr(s.begin, s.end - s.begin), s.text);
      std::copy(s.text.begin(), s.text.end(), covered.begin() + static_cast<std::ptrdiff_t>(s.begin));
      last = s.end;
    }
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (!std::isspace(static_cast<unsigned char>(doc[i]))) {
        EXPECT_EQ(covered[i], doc[i]);
      }
    }
  }
}

TEST(Tfidf, SingleSentence) {
  const ProviderCorpus c{"p", {{"d", "Only one sentence here."}}};
  const auto ranked = tfidf_rank(c);
  ASSERT_EQ(ranked.size(), 1u);
  EXPECT_GT(ranked[0].score, 0.0);
  EXPECT_TRUE(std::isfinite(ranked[0].score));
}

TEST(Tfidf, HandComputedScores) {
  // s0 = "zeta common", s1 = "common common". N = 2.
  // s0: zeta tf 1/2, idf ln(3/2)+1; common tf 1/2, idf ln(3/3)+1 = 1. Mean of the two.
  // s1: common tf 1, idf 1. Mean over one distinct term = 1.
  const ProviderCorpus c{"p", {{"d", "Zeta common. Common common."}}};
  const auto ranked = tfidf_rank(c);
  ASSERT_EQ(ranked.size(), 2u);
  const double s0 = (0.5 * (std::log(1.5) + 1.0) + 0.5 * 1.0) / 2.0;
  const double s1 = 1.0;
  std::map<std::size_t, double> by_sentence;
  for (const auto& r : ranked) by_sentence[r.ref.sentence] = r.score;
  EXPECT_NEAR(by_sentence[0], s0, 1e-12);
  EXPECT_NEAR(by_sentence[1], s1, 1e-12);
  // Mean-over-distinct-terms favours the single-term sentence.
  EXPECT_EQ(ranked[0].ref.sentence, 1u);
}

TEST(Tfidf, UniqueTermSentenceFirstWhenLengthsMatch) {
  const ProviderCorpus balanced{"p", {{"d", "Rare word. Common word. Common word."}}};
  const auto ranked = tfidf_rank(balanced);
  EXPECT_EQ(ranked[0].ref.sentence, 0u);
  EXPECT_THROW(tfidf_rank(ProviderCorpus{"p", {{"d", "   "}}}), Error);
}

TEST(Tfidf, DocumentOrderIndependent) {
  const ProviderCorpus a{"p", {{"d1", "Apple banana. Cherry apple."}, {"d2", "Banana durian fig."}}};
  const ProviderCorpus b{"p", {{"d2", "Banana durian fig."}, {"d1", "Apple banana. Cherry apple."}}};
  const auto ra = tfidf_rank(a);
  const auto rb = tfidf_rank(b);
  std::map<std::pair<std::string, std::size_t>, double> sa, sb;
  for (const auto& r : ra) sa[{a.documents[r.ref.doc].doc_id, r.ref.sentence}] = r.score;
  for (const auto& r : rb) sb[{b.documents[r.ref.doc].doc_id, r.ref.sentence}] = r.score;
  ASSERT_EQ(sa.size(), sb.size());
  for (const auto& [k, v] : sa) EXPECT_DOUBLE_EQ(sb[k], v);
}

TEST(Select, CeilCountsAndDeterminism) {
  std::vector<RankedSentence> ranked;
  for (std::size_t i = 0; i < 10; ++i) ranked.push_back({{0, 9 - i}, 10.0 - static_cast<double>(i)});
  SelectionConfig c;
  c.fraction = 0.2;
  const auto top = select_for_marking(ranked, c);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].sentence, 8u);
  EXPECT_EQ(top[1].sentence, 9u);
  c.fraction = 0.05;
  EXPECT_EQ(select_for_marking(ranked, c).size(), 1u);
  c.strategy = SelectionStrategy::Random;
  c.fraction = 0.3;
  c.seed = 11;
  EXPECT_EQ(select_for_marking(ranked, c), select_for_marking(ranked, c));
  EXPECT_EQ(select_for_marking(ranked, c).size(), 3u);
  c.fraction = 0.0;
  EXPECT_THROW(select_for_marking(ranked, c), Error);
}

TEST(Select, TfidfMonotoneInFraction) {
  std::vector<RankedSentence> ranked;
  for (std::size_t i = 0; i < 37; ++i) ranked.push_back({{i % 4, i}, 1.0 / (1.0 + static_cast<double>(i))});
  SelectionConfig c;
  for (int i = 1; i < 20; ++i) {
    c.fraction = 0.05 * i;
    const auto small = select_for_marking(ranked, c);
    c.fraction = std::min(1.0, 0.05 * (i + 1));
    const auto big = select_for_marking(ranked, c);
    EXPECT_TRUE(std::includes(big.begin(), big.end(), small.begin(), small.end()));
  }
}

TEST(Insert, GapFrequenciesUniform) {
  const std::string s = "alpha beta gamma";
  const Watermark w{std::vector<Codepoint>(10, kAlpha.at(1))};
  std::map<std::size_t, int> hits;
  const int n = 10'000;
  for (int seed = 0; seed < n; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    ++hits[insert_watermark(s, w, rng).offset];
  }
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_NEAR(hits[5] / static_cast<double>(n), 0.5, 0.03);
  EXPECT_NEAR(hits[10] / static_cast<double>(n), 0.5, 0.03);
}

TEST(Insert, GapChiSquare) {
  // 6 words, 5 interior gaps. Critical chi-square value for 4 dof at 0.01 is 13.277.
  const std::string s = "one two three four five six";
  const Watermark w{std::vector<Codepoint>(10, kAlpha.at(0))};
  std::map<std::size_t, int> hits;
  const int n = 20'000;
  std::mt19937_64 rng(2024);
  for (int i = 0; i < n; ++i) ++hits[insert_watermark(s, w, rng).offset];
  ASSERT_EQ(hits.size(), 5u);
  double chi2 = 0.0;
  const double expected = n / 5.0;
  for (const auto& [offset, count] : hits) chi2 += (count - expected) * (count - expected) / expected;
  EXPECT_LT(chi2, 13.277);
}

TEST(Insert, SingleWordAppends) {
  std::mt19937_64 rng(1);
  const Watermark w{{kAlpha.at(2), kAlpha.at(3)}};
  const auto ins = insert_watermark("hello", w, rng);
  EXPECT_EQ(ins.offset, 5u);
  EXPECT_EQ(ins.text, "hello" + w.to_utf8());
}

TEST(Insert, StripRoundtrip) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    const auto s = random_sentence(rng);
    const auto w = random_watermark(rng);
    const auto ins = insert_watermark(s, w, rng);
    const auto stripped = strip_watermarks(ins.text, kAlpha);
    EXPECT_EQ(stripped.clean, s);
    ASSERT_EQ(stripped.runs.size(), 1u);
    EXPECT_EQ(stripped.runs[0].codepoints, w.chars);
    EXPECT_EQ(stripped.runs[0].offset, ins.offset);
  }
}

TEST(Strip, Examples) {
  const Watermark w{std::vector<Codepoint>(10, kAlpha.at(4))};
  const auto one = strip_watermarks("ab" + w.to_utf8() + " cd", kAlpha);
  EXPECT_EQ(one.clean, "ab cd");
  ASSERT_EQ(one.runs.size(), 1u);
  EXPECT_EQ(one.runs[0].codepoints, w.chars);
  const auto none = strip_watermarks("plain text", kAlpha);
  EXPECT_EQ(none.clean, "plain text");
  EXPECT_TRUE(none.runs.empty());
  const Watermark short3{std::vector<Codepoint>(3, kAlpha.at(0))};
  const auto text = "x" + w.to_utf8() + " y " + short3.to_utf8() + "z";
  const auto two = strip_watermarks(text, kAlpha);
  ASSERT_EQ(two.runs.size(), 2u);
  EXPECT_EQ(two.runs[0].codepoints.size(), 10u);
  EXPECT_EQ(two.runs[1].codepoints.size(), 3u);
  EXPECT_EQ(reinsert_runs(two.clean, two.runs), text);
}

TEST(Ingestion, RejectsAlphabetCodepoints) {
  const Watermark w{{kAlpha.at(0)}};
  const ProviderCorpus bad{"p", {{"d", "text" + w.to_utf8()}}};
  try {
    check_ingestion(bad, kAlpha);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WatermarkInInput);
  }
}

TEST(MarkedCorpus, OneProviderTenSentences) {
  std::string doc;
  for (int i = 0; i < 10; ++i) doc += "Sentence number w" + std::to_string(i) + " has words. ";
  const std::vector<ProviderCorpus> corpora{{"p0", {{"d0", doc}}}};
  const auto reg = registry_for({"p0"});
  const auto marked = build_marked_corpus(corpora, reg, SelectionConfig{});
  ASSERT_EQ(marked.manifest.size(), 2u);
  for (const auto& r : marked.manifest) EXPECT_EQ(r.watermark, reg.watermark_of("p0"));
}

TEST(MarkedCorpus, RoundtripAndManifestCompleteness) {
  std::mt19937_64 rng(9);
  std::vector<ProviderCorpus> corpora;
  for (int p = 0; p < 3; ++p) {
    ProviderCorpus c{"p" + std::to_string(p), {}};
    for (int d = 0; d < 4; ++d) {
      std::string doc;
      for (int s = 0; s < 6; ++s) doc += random_sentence(rng) + " ";
      c.documents.push_back({"d" + std::to_string(d), doc});
    }
    corpora.push_back(c);
  }
  const auto reg = registry_for({"p0", "p1", "p2"}, 3);
  for (double fraction : {0.1, 0.5, 1.0}) {
    SelectionConfig sel;
    sel.fraction = fraction;
    sel.seed = 77;
    const auto marked = build_marked_corpus(corpora, reg, sel);
    std::set<std::tuple<ProviderId, std::string, std::size_t>> from_manifest, from_text;
    for (const auto& r : marked.manifest) {
      EXPECT_EQ(r.watermark, reg.watermark_of(r.provider));
      from_manifest.insert({r.provider, r.doc_id, r.char_offset});
    }
    for (std::size_t p = 0; p < corpora.size(); ++p) {
      for (std::size_t d = 0; d < corpora[p].documents.size(); ++d) {
        const auto stripped = strip_watermarks(marked.corpora[p].documents[d].text, kAlpha);
        EXPECT_EQ(stripped.clean, corpora[p].documents[d].text);
        for (const auto& run : stripped.runs) {
          EXPECT_EQ(run.codepoints, reg.watermark_of(corpora[p].provider).chars);
          from_text.insert({corpora[p].provider, corpora[p].documents[d].doc_id, run.offset});
        }
      }
    }
    EXPECT_EQ(from_manifest, from_text);
    const auto again = build_marked_corpus(corpora, reg, sel);
    EXPECT_EQ(again.corpora[1].documents[2].text, marked.corpora[1].documents[2].text);
  }
}
