#include "wasa/marking.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "wasa/errors.hpp"

namespace wasa {

namespace {

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// [begin, end) byte spans of whitespace-delimited chunks.
std::vector<std::pair<std::size_t, std::size_t>> chunk_spans(std::string_view s) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_ascii_space(s[i])) ++i;
    if (i >= s.size()) break;
    const std::size_t start = i;
    while (i < s.size() && !is_ascii_space(s[i])) ++i;
    spans.emplace_back(start, i);
  }
  return spans;
}

}  // namespace

std::vector<Sentence> segment_sentences(std::string_view text) {
  std::vector<Sentence> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_ascii_space(text[i])) ++i;
    if (i >= n) break;
    const std::size_t start = i;
    std::size_t end = n;
    for (std::size_t j = i; j < n; ++j) {
      if (is_terminator(text[j]) && (j + 1 == n || is_ascii_space(text[j + 1]))) {
        end = j + 1;
        break;
      }
    }
    // Trailing whitespace of an unterminated tail is not part of the sentence.
    std::size_t trimmed = end;
    while (trimmed > start && is_ascii_space(text[trimmed - 1])) --trimmed;
    out.push_back({std::string(text.substr(start, trimmed - start)), start, trimmed});
    i = end;
  }
  return out;
}

std::vector<RankedSentence> tfidf_rank(const ProviderCorpus& corpus) {
  std::vector<SentenceRef> refs;
  std::vector<std::vector<std::string>> terms;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    const auto sentences = segment_sentences(corpus.documents[d].text);
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      refs.push_back({d, s});
      terms.push_back(words_of(sentences[s].text));
    }
  }
  if (refs.empty()) throw Error(ErrorKind::EmptyCorpus, "provider " + corpus.provider + " has no sentences");

  std::map<std::string, std::size_t> df;
  for (const auto& t : terms) {
    for (const auto& term : std::set<std::string>(t.begin(), t.end())) ++df[term];
  }
  const double n = static_cast<double>(refs.size());

  std::vector<RankedSentence> ranked;
  ranked.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    std::map<std::string, std::size_t> counts;
    for (const auto& term : terms[i]) ++counts[term];
    double score = 0.0;
    if (!counts.empty()) {
      const double len = static_cast<double>(terms[i].size());
      for (const auto& [term, count] : counts) {
        const double idf = std::log((1.0 + n) / (1.0 + static_cast<double>(df[term]))) + 1.0;
        score += (static_cast<double>(count) / len) * idf;
      }
      score /= static_cast<double>(counts.size());
    }
    ranked.push_back({refs[i], score});
  }

  std::stable_sort(ranked.begin(), ranked.end(), [&](const RankedSentence& a, const RankedSentence& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto& da = corpus.documents[a.ref.doc].doc_id;
    const auto& db = corpus.documents[b.ref.doc].doc_id;
    if (da != db) return da < db;
    return a.ref < b.ref;
  });
  return ranked;
}

std::vector<SentenceRef> select_for_marking(std::span<const RankedSentence> ranked, const SelectionConfig& config) {
  if (!(config.fraction > 0.0 && config.fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "fraction must be in (0, 1]");
  }
  if (ranked.empty()) return {};
  const auto count = std::min<std::size_t>(
      ranked.size(), static_cast<std::size_t>(std::ceil(config.fraction * static_cast<double>(ranked.size()) - 1e-9)));

  std::vector<SentenceRef> picked;
  if (config.strategy == SelectionStrategy::TfIdf) {
    for (std::size_t i = 0; i < count; ++i) picked.push_back(ranked[i].ref);
  } else {
    std::vector<std::size_t> order(ranked.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < count; ++i) picked.push_back(ranked[order[i]].ref);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

Insertion insert_watermark(std::string_view sentence, const Watermark& w, std::mt19937_64& rng) {
  const auto spans = chunk_spans(sentence);
  std::size_t offset = sentence.size();
  if (spans.size() >= 2) {
    std::uniform_int_distribution<std::size_t> gap(0, spans.size() - 2);
    offset = spans[gap(rng)].second;
  } else if (spans.size() == 1) {
    offset = spans[0].second;
  }
  std::string text;
  text.reserve(sentence.size() + 3 * w.size());
  text.append(sentence.substr(0, offset));
  text += w.to_utf8();
  text.append(sentence.substr(offset));
  return {std::move(text), offset};
}

StrippedText strip_watermarks(std::string_view text, const WatermarkAlphabet& alphabet) {
  StrippedText out;
  out.clean.reserve(text.size());
  bool in_run = false;
  for (const auto& d : decode_utf8(text)) {
    if (alphabet.contains(d.value)) {
      if (!in_run) out.runs.push_back({out.clean.size(), {}});
      out.runs.back().codepoints.push_back(d.value);
      in_run = true;
    } else {
      out.clean.append(text.substr(d.offset, d.length));
      in_run = false;
    }
  }
  return out;
}

std::string reinsert_runs(std::string_view clean, std::span<const WatermarkRun> runs) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& run : runs) {
    const std::size_t at = std::min(run.offset, clean.size());
    out.append(clean.substr(pos, at - pos));
    out += encode_utf8(run.codepoints);
    pos = at;
  }
  out.append(clean.substr(pos));
  return out;
}

void check_ingestion(const ProviderCorpus& corpus, const WatermarkAlphabet& alphabet) {
  for (const auto& doc : corpus.documents) {
    for (const auto& d : decode_utf8(doc.text)) {
      if (alphabet.contains(d.value)) {
        throw Error(ErrorKind::WatermarkInInput, "provider " + corpus.provider + " document " + doc.doc_id +
                                                     " contains " + format_codepoint(d.value) + " at byte " +
                                                     std::to_string(d.offset));
      }
    }
  }
}

MarkedCorpus build_marked_corpus(std::span<const ProviderCorpus> corpora, const Registry& registry,
                                 const SelectionConfig& config) {
  MarkedCorpus marked;
  for (std::size_t p = 0; p < corpora.size(); ++p) {
    const auto& corpus = corpora[p];
    const Watermark& w = registry.watermark_of(corpus.provider);
    check_ingestion(corpus, registry.alphabet());

    SelectionConfig provider_config = config;
    provider_config.seed = mix_seed(config.seed, 0x5e1ec7, *registry.ordinal_of(corpus.provider));
    const auto ranked = tfidf_rank(corpus);
    const auto selected = select_for_marking(ranked, provider_config);

    ProviderCorpus out{corpus.provider, {}};
    std::size_t next = 0;
    for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
      const auto& doc = corpus.documents[d];
      std::mt19937_64 rng(mix_seed(config.seed, *registry.ordinal_of(corpus.provider), d));
      const auto sentences = segment_sentences(doc.text);
      std::vector<WatermarkRun> runs;
      for (; next < selected.size() && selected[next].doc == d; ++next) {
        const auto& sentence = sentences[selected[next].sentence];
        const auto ins = insert_watermark(sentence.text, w, rng);
        const std::size_t offset = sentence.begin + ins.offset;
        runs.push_back({offset, w.chars});
        marked.manifest.push_back({corpus.provider, doc.doc_id, selected[next].sentence, offset, w});
      }
      out.documents.push_back({doc.doc_id, reinsert_runs(doc.text, runs)});
    }
    marked.corpora.push_back(std::move(out));
  }
  return marked;
}

}  // namespace wasa
