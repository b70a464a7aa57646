#pragma once

#include <cstdint>
#include <vector>

#include "wasa/attacks.hpp"
#include "wasa/marking.hpp"

namespace wasa {

/// Topic-skewed synthetic providers: a shared Zipf vocabulary plus a keyword
/// set per provider. `overlap` is the fraction of each provider's keywords
/// drawn from one common pool (0 = disjoint).
struct SynthConfig {
  std::size_t providers = 5;
  std::size_t heldout_providers = 0;
  double overlap = 0.0;
  std::size_t train_docs = 30;
  std::size_t eval_docs = 3;
  std::size_t sentences_per_doc = 10;
  std::size_t shared_words = 300;
  std::size_t keywords_per_provider = 40;
  std::size_t min_sentence_chars = 210;
  double keyword_rate_min = 0.1;
  double keyword_rate_max = 0.6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthBench {
  std::vector<ProviderCorpus> train;    // providers p00..
  std::vector<ProviderCorpus> eval;     // held-out documents of the same providers
  std::vector<ProviderCorpus> heldout;  // providers never used for training
  Lexicon lexicon;                      // synonyms among shared words
};

SynthBench make_synthbench(const SynthConfig& config);

}  // namespace wasa
