#include "wasa/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "wasa/errors.hpp"

namespace wasa {

Bm25Index Bm25Index::build(std::span<const ProviderCorpus> corpora, const WatermarkAlphabet& alphabet, double k1,
                           double b) {
  Bm25Index index;
  index.alphabet_ = alphabet;
  index.k1_ = k1;
  index.b_ = b;
  std::size_t total = 0;
  for (const auto& corpus : corpora) {
    const std::size_t ordinal = index.providers_.size();
    index.providers_.push_back(corpus.provider);
    for (const auto& doc : corpus.documents) {
      Entry e;
      e.provider = ordinal;
      for (auto& w : words_of(doc.text, alphabet.codepoints())) {
        ++e.tf[w];
        ++e.length;
      }
      for (const auto& [term, count] : e.tf) ++index.df_[term];
      total += e.length;
      index.docs_.push_back(std::move(e));
    }
  }
  if (index.docs_.empty()) throw Error(ErrorKind::EmptyCorpus, "no documents to index");
  index.avgdl_ = static_cast<double>(total) / static_cast<double>(index.docs_.size());
  return index;
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
  const auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

double Bm25Index::idf(std::string_view term) const {
  const auto n = static_cast<double>(docs_.size());
  const auto df = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::score(std::size_t doc, std::span<const std::string> query) const {
  const auto& e = docs_.at(doc);
  const double norm = k1_ * (1.0 - b_ + b_ * static_cast<double>(e.length) / avgdl_);
  double s = 0.0;
  for (const auto& term : query) {
    const auto it = e.tf.find(term);
    if (it == e.tf.end()) continue;
    const auto tf = static_cast<double>(it->second);
    s += idf(term) * tf * (k1_ + 1.0) / (tf + norm);
  }
  return s;
}

std::vector<std::pair<ProviderId, double>> Bm25Index::attribute(std::string_view text, std::size_t k) const {
  const auto query = words_of(text, alphabet_.codepoints());
  std::vector<double> best(providers_.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    best[docs_[d].provider] = std::max(best[docs_[d].provider], score(d, query));
  }
  std::vector<std::size_t> order(providers_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return best[a] > best[c]; });
  std::vector<std::pair<ProviderId, double>> out;
  for (std::size_t i = 0; i < order.size() && i < k; ++i) out.emplace_back(providers_[order[i]], best[order[i]]);
  return out;
}

std::string Bm25Index::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["k1"] = k1_;
  j["b"] = b_;
  j["avgdl"] = avgdl_;
  j["providers"] = providers_;
  auto& alpha = j["alphabet"] = nlohmann::ordered_json::array();
  for (Codepoint cp : alphabet_.codepoints()) alpha.push_back(format_codepoint(cp));
  j["df"] = df_;
  auto& docs = j["documents"] = nlohmann::ordered_json::array();
  for (const auto& e : docs_) {
    docs.push_back({{"provider", e.provider}, {"length", e.length}, {"tf", e.tf}});
  }
  return j.dump(2) + "\n";
}

Bm25Index Bm25Index::from_json(std::string_view json) {
  try {
    const auto j = nlohmann::json::parse(json);
    if (j.at("version").get<int>() != 1) throw Error(ErrorKind::FormatVersionMismatch, "unsupported BM25 index version");
    Bm25Index index;
    index.k1_ = j.at("k1").get<double>();
    index.b_ = j.at("b").get<double>();
    index.avgdl_ = j.at("avgdl").get<double>();
    index.providers_ = j.at("providers").get<std::vector<ProviderId>>();
    std::vector<Codepoint> alpha;
    for (const auto& code : j.at("alphabet")) {
      const auto cp = parse_codepoint(code.get<std::string>());
      if (!cp) throw Error(ErrorKind::InvalidArgument, "bad codepoint in BM25 index");
      alpha.push_back(*cp);
    }
    index.alphabet_ = WatermarkAlphabet(std::move(alpha));
    for (const auto& [term, df] : j.at("df").items()) index.df_[term] = df.get<std::size_t>();
    for (const auto& d : j.at("documents")) {
      Entry e;
      e.provider = d.at("provider").get<std::size_t>();
      e.length = d.at("length").get<std::size_t>();
      e.tf = d.at("tf").get<std::map<std::string, std::size_t>>();
      if (e.provider >= index.providers_.size()) throw Error(ErrorKind::InvalidArgument, "BM25 provider out of range");
      index.docs_.push_back(std::move(e));
    }
    return index;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("BM25 index: ") + e.what());
  }
}

void Bm25Index::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << to_json();
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace wasa
