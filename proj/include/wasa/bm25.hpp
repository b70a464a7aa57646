#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wasa/marking.hpp"

namespace wasa {

/// Okapi BM25 over source documents, aggregated per provider by max.
class Bm25Index {
 public:
  struct Entry {
    std::size_t provider = 0;  // ordinal into providers()
    std::size_t length = 0;
    std::map<std::string, std::size_t> tf;
  };

  static Bm25Index build(std::span<const ProviderCorpus> corpora, const WatermarkAlphabet& alphabet, double k1 = 1.5,
                         double b = 0.75);

  double idf(std::string_view term) const;
  /// Okapi score of document `doc` for an already tokenized query.
  double score(std::size_t doc, std::span<const std::string> query) const;
  std::vector<std::pair<ProviderId, double>> attribute(std::string_view text, std::size_t k) const;

  std::span<const ProviderId> providers() const { return providers_; }
  std::span<const Entry> documents() const { return docs_; }
  std::size_t document_frequency(std::string_view term) const;
  double avgdl() const { return avgdl_; }
  double k1() const { return k1_; }
  double b() const { return b_; }

  std::string to_json() const;
  static Bm25Index from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

 private:
  WatermarkAlphabet alphabet_ = WatermarkAlphabet::standard();
  std::vector<ProviderId> providers_;
  std::vector<Entry> docs_;
  std::map<std::string, std::size_t, std::less<>> df_;
  double avgdl_ = 0.0;
  double k1_ = 1.5;
  double b_ = 0.75;
};

}  // namespace wasa
