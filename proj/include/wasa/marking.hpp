#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wasa/watermark.hpp"

namespace wasa {

struct Document {
  std::string doc_id;
  std::string text;
};

struct ProviderCorpus {
  ProviderId provider;
  std::vector<Document> documents;
};

/// Byte span [begin, end) into the owning document.
struct Sentence {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Splits after '.', '!' or '?' when followed by whitespace or end of text.
/// Abbreviations ("e.g. ") produce extra splits.
std::vector<Sentence> segment_sentences(std::string_view text);

struct SentenceRef {
  std::size_t doc = 0;       // index into ProviderCorpus::documents
  std::size_t sentence = 0;  // index into segment_sentences(doc.text)

  auto operator<=>(const SentenceRef&) const = default;
};

struct RankedSentence {
  SentenceRef ref;
  double score = 0.0;
};

/// Each sentence is an IDF document; a sentence's score is the mean of
/// tf * (ln((1+N)/(1+df)) + 1) over its distinct terms. Descending, ties by
/// (doc_id, sentence index).
std::vector<RankedSentence> tfidf_rank(const ProviderCorpus& corpus);

enum class SelectionStrategy { TfIdf, Random };

struct SelectionConfig {
  double fraction = 0.20;
  SelectionStrategy strategy = SelectionStrategy::TfIdf;
  std::uint64_t seed = 0;
};

/// ceil(fraction * N) refs, returned in ascending ref order.
std::vector<SentenceRef> select_for_marking(std::span<const RankedSentence> ranked, const SelectionConfig& config);

struct Insertion {
  std::string text;
  std::size_t offset = 0;  // byte offset of the run inside the unmarked sentence
};

/// Inserts the watermark as one run at the end of a uniformly chosen word
/// that is not the last one; single-word sentences get the run appended.
Insertion insert_watermark(std::string_view sentence, const Watermark& w, std::mt19937_64& rng);

struct WatermarkRun {
  std::size_t offset = 0;  // byte offset into the cleaned text
  std::vector<Codepoint> codepoints;

  bool operator==(const WatermarkRun&) const = default;
};

struct StrippedText {
  std::string clean;
  std::vector<WatermarkRun> runs;
};

StrippedText strip_watermarks(std::string_view text, const WatermarkAlphabet& alphabet);
std::string reinsert_runs(std::string_view clean, std::span<const WatermarkRun> runs);

/// Throws WatermarkInInput if any document already contains an alphabet codepoint.
void check_ingestion(const ProviderCorpus& corpus, const WatermarkAlphabet& alphabet);

struct MarkRecord {
  ProviderId provider;
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::size_t char_offset = 0;  // UTF-8 byte offset into the unmarked document
  Watermark watermark;
};

struct MarkedCorpus {
  std::vector<ProviderCorpus> corpora;  // same order and ids as the input, texts marked
  std::vector<MarkRecord> manifest;
};

MarkedCorpus build_marked_corpus(std::span<const ProviderCorpus> corpora, const Registry& registry,
                                 const SelectionConfig& config);

}  // namespace wasa
