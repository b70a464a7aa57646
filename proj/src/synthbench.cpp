#include "wasa/synthbench.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "wasa/errors.hpp"

namespace wasa {

namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "kl"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

std::string pseudo_word(std::mt19937_64& rng, int syllables) {
  std::uniform_int_distribution<std::size_t> onset(0, std::size(kOnsets) - 1);
  std::uniform_int_distribution<std::size_t> vowel(0, std::size(kVowels) - 1);
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kOnsets[onset(rng)];
    w += kVowels[vowel(rng)];
  }
  return w;
}

std::vector<std::string> fresh_words(std::mt19937_64& rng, std::size_t n, int min_syl, int max_syl,
                                     std::set<std::string>& used) {
  std::uniform_int_distribution<int> syl(min_syl, max_syl);
  std::vector<std::string> out;
  while (out.size() < n) {
    auto w = pseudo_word(rng, syl(rng));
    if (used.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::string label(char prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%02zu", prefix, i);
  return buf;
}

struct Topic {
  std::vector<std::string> keywords;
};

class SentenceMaker {
 public:
  SentenceMaker(const std::vector<std::string>& shared, const SynthConfig& config)
      : shared_(shared), config_(config) {
    std::vector<double> weights;
    for (std::size_t r = 0; r < shared.size(); ++r) weights.push_back(1.0 / static_cast<double>(r + 1));
    zipf_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  }

  std::string make(const Topic& topic, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> rate_dist(config_.keyword_rate_min, config_.keyword_rate_max);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> kw(0, topic.keywords.size() - 1);
    const double rate = rate_dist(rng);
    std::string s;
    while (s.size() < config_.min_sentence_chars) {
      const std::string& w = coin(rng) < rate ? topic.keywords[kw(rng)] : shared_[zipf_(rng)];
      if (!s.empty()) s.push_back(' ');
      s += w;
    }
    s[0] = static_cast<char>(s[0] - 'a' + 'A');
    s.push_back('.');
    return s;
  }

 private:
  const std::vector<std::string>& shared_;
  const SynthConfig& config_;
  std::discrete_distribution<std::size_t> zipf_;
};

ProviderCorpus make_corpus(const ProviderId& name, const Topic& topic, std::size_t docs, std::size_t first_doc,
                           SentenceMaker& maker, const SynthConfig& config, std::mt19937_64& rng) {
  ProviderCorpus corpus{name, {}};
  for (std::size_t d = 0; d < docs; ++d) {
    std::string text;
    for (std::size_t s = 0; s < config.sentences_per_doc; ++s) {
      if (!text.empty()) text.push_back(' ');
      text += maker.make(topic, rng);
    }
    corpus.documents.push_back({label('d', first_doc + d), std::move(text)});
  }
  return corpus;
}

}  // namespace

void SynthConfig::validate() const {
  if (providers < 1) throw Error(ErrorKind::InvalidArgument, "need at least one provider");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw Error(ErrorKind::InvalidArgument, "overlap must be in [0, 1]");
  if (keywords_per_provider < 1 || shared_words < 2) throw Error(ErrorKind::InvalidArgument, "word counts too small");
  if (sentences_per_doc < 1 || train_docs < 1) throw Error(ErrorKind::InvalidArgument, "document counts too small");
  if (!(keyword_rate_min >= 0.0 && keyword_rate_min <= keyword_rate_max && keyword_rate_max <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "keyword rates must satisfy 0 <= min <= max <= 1");
  }
}

SynthBench make_synthbench(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(mix_seed(config.seed, 0x5b));
  std::set<std::string> used;
  const auto shared = fresh_words(rng, config.shared_words, 1, 2, used);
  const std::size_t n_common =
      static_cast<std::size_t>(std::llround(config.overlap * static_cast<double>(config.keywords_per_provider)));
  const auto common = fresh_words(rng, config.keywords_per_provider, 3, 3, used);

  auto make_topic = [&]() {
    Topic t;
    std::vector<std::string> pool = common;
    std::shuffle(pool.begin(), pool.end(), rng);
    t.keywords.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_common));
    for (auto& w : fresh_words(rng, config.keywords_per_provider - n_common, 3, 3, used)) t.keywords.push_back(w);
    return t;
  };

  SentenceMaker maker(shared, config);
  SynthBench bench;
  for (std::size_t p = 0; p < config.providers; ++p) {
    const auto topic = make_topic();
    const auto name = label('p', p);
    bench.train.push_back(make_corpus(name, topic, config.train_docs, 0, maker, config, rng));
    bench.eval.push_back(make_corpus(name, topic, config.eval_docs, config.train_docs, maker, config, rng));
  }
  for (std::size_t h = 0; h < config.heldout_providers; ++h) {
    const auto topic = make_topic();
    bench.heldout.push_back(make_corpus(label('h', h), topic, config.eval_docs, 0, maker, config, rng));
  }

  // Every other shared word gets two random shared words as synonyms.
  std::uniform_int_distribution<std::size_t> pick(0, shared.size() - 1);
  for (std::size_t i = 0; i < shared.size(); i += 2) {
    std::vector<std::string> syns;
    while (syns.size() < 2) {
      const auto& s = shared[pick(rng)];
      if (s != shared[i] && std::find(syns.begin(), syns.end(), s) == syns.end()) syns.push_back(s);
    }
    bench.lexicon.synonyms[shared[i]] = std::move(syns);
  }
  bench.lexicon.fill_words = shared;
  return bench;
}

}  // namespace wasa
