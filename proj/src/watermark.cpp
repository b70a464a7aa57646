#include "wasa/watermark.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "wasa/errors.hpp"

namespace wasa {

namespace {

constexpr Codepoint kDefaultCodepoints[] = {0x200B, 0x200C, 0x200D, 0x2062, 0x2063, 0x2064};

bool capacity_at_least(std::size_t base, std::size_t exponent, std::size_t needed) {
  std::size_t value = 1;
  for (std::size_t i = 0; i < exponent; ++i) {
    if (value >= needed) return true;
    value *= base;
  }
  return value >= needed;
}

}  // namespace

WatermarkAlphabet WatermarkAlphabet::standard(std::size_t size) {
  if (size < 1 || size > std::size(kDefaultCodepoints)) {
    throw Error(ErrorKind::InvalidArgument, "standard alphabet size must be in [1, 6]");
  }
  return WatermarkAlphabet({kDefaultCodepoints, kDefaultCodepoints + size});
}

WatermarkAlphabet::WatermarkAlphabet(std::vector<Codepoint> codepoints) : codepoints_(std::move(codepoints)) {
  if (codepoints_.empty()) throw Error(ErrorKind::InvalidArgument, "alphabet is empty");
  auto sorted = codepoints_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorKind::InvalidArgument, "alphabet codepoints must be distinct");
  }
}

std::optional<std::size_t> WatermarkAlphabet::index_of(Codepoint cp) const {
  auto it = std::find(codepoints_.begin(), codepoints_.end(), cp);
  if (it == codepoints_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - codepoints_.begin());
}

std::string Watermark::to_codes() const {
  std::string out;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (i) out.push_back(' ');
    out += format_codepoint(chars[i]);
  }
  return out;
}

Watermark Watermark::from_codes(std::string_view codes) {
  Watermark w;
  std::istringstream in{std::string(codes)};
  std::string code;
  while (in >> code) {
    auto cp = parse_codepoint(code);
    if (!cp) throw Error(ErrorKind::InvalidArgument, "bad codepoint '" + code + "'");
    w.chars.push_back(*cp);
  }
  return w;
}

std::size_t hamming_distance(std::span<const Codepoint> a, std::span<const Codepoint> b) {
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t d = std::max(a.size(), b.size()) - n;
  for (std::size_t i = 0; i < n; ++i) d += a[i] != b[i];
  return d;
}

std::size_t levenshtein_distance(std::span<const Codepoint> a, std::span<const Codepoint> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Registry::Registry(WatermarkAlphabet alphabet, std::size_t length, std::uint64_t seed, std::size_t min_hamming)
    : alphabet_(std::move(alphabet)), length_(length), seed_(seed), min_hamming_(min_hamming) {}

void Registry::bind(ProviderId provider, Watermark w) {
  if (w.size() != length_) throw Error(ErrorKind::InvalidArgument, "watermark length mismatch for " + provider);
  for (Codepoint cp : w.chars) {
    if (!alphabet_.contains(cp)) throw Error(ErrorKind::InvalidArgument, "watermark outside alphabet for " + provider);
  }
  if (by_provider_.count(provider)) throw Error(ErrorKind::InvalidArgument, "duplicate provider " + provider);
  const std::string key = w.to_utf8();
  if (by_watermark_.count(key)) throw Error(ErrorKind::InvalidArgument, "duplicate watermark for " + provider);
  by_provider_.emplace(provider, providers_.size());
  by_watermark_.emplace(key, providers_.size());
  providers_.push_back(std::move(provider));
  watermarks_.push_back(std::move(w));
}

Registry Registry::create(std::span<const ProviderId> providers, std::size_t length,
                          const WatermarkAlphabet& alphabet, std::uint64_t seed, std::size_t min_hamming) {
  if (providers.empty()) throw Error(ErrorKind::InvalidArgument, "no providers");
  if (length == 0) throw Error(ErrorKind::InvalidArgument, "watermark length must be positive");
  if (min_hamming > length) throw Error(ErrorKind::InvalidArgument, "min_hamming exceeds watermark length");
  if (!capacity_at_least(alphabet.size(), length, providers.size())) {
    throw Error(ErrorKind::CapacityExceeded, "alphabet^length is smaller than the provider count");
  }

  Registry registry(alphabet, length, seed, min_hamming);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  const std::size_t budget = kDrawsPerProvider * providers.size();
  std::size_t draws = 0;

  for (const auto& provider : providers) {
    for (;;) {
      if (draws++ >= budget) {
        throw Error(ErrorKind::CapacityExceeded,
                    "could not place " + std::to_string(providers.size()) + " watermarks of length " +
                        std::to_string(length) + " at distance " + std::to_string(min_hamming) + " within " +
                        std::to_string(budget) + " draws");
      }
      Watermark candidate;
      candidate.chars.reserve(length);
      for (std::size_t i = 0; i < length; ++i) candidate.chars.push_back(alphabet.at(pick(rng)));
      const bool clash = std::any_of(registry.watermarks_.begin(), registry.watermarks_.end(), [&](const auto& w) {
        return w == candidate || levenshtein_distance(w.chars, candidate.chars) < min_hamming;
      });
      if (!clash) {
        registry.bind(provider, std::move(candidate));
        break;
      }
    }
  }
  return registry;
}

std::optional<std::size_t> Registry::ordinal_of(std::string_view provider) const {
  auto it = by_provider_.find(std::string(provider));
  if (it == by_provider_.end()) return std::nullopt;
  return it->second;
}

const Watermark& Registry::watermark_of(std::string_view provider) const {
  auto ordinal = ordinal_of(provider);
  if (!ordinal) throw Error(ErrorKind::UnknownProvider, std::string(provider));
  return watermarks_[*ordinal];
}

std::optional<ProviderId> Registry::provider_of(const Watermark& w, MatchMode mode) const {
  if (mode == MatchMode::Exact) {
    auto it = by_watermark_.find(w.to_utf8());
    if (it == by_watermark_.end()) return std::nullopt;
    return providers_[it->second];
  }
  std::size_t best = 0;
  std::size_t best_distance = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < watermarks_.size(); ++i) {
    const std::size_t d = levenshtein_distance(watermarks_[i].chars, w.chars);
    if (d < best_distance) {
      best_distance = d;
      best = i;
    }
  }
  return providers_[best];
}

MatchResult Registry::match_generated(std::span<const Watermark> decoded, MatchMode mode) const {
  if (decoded.empty()) return {};
  std::optional<ProviderId> first;
  for (const auto& w : decoded) {
    auto p = provider_of(w, mode);
    if (!p) return {};
    if (!first) {
      first = std::move(p);
    } else if (*first != *p) {
      return {};
    }
  }
  return {first, true};
}

std::string Registry::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["length"] = length_;
  j["min_hamming"] = min_hamming_;
  j["seed"] = seed_;
  auto& alphabet = j["alphabet"] = nlohmann::ordered_json::array();
  for (Codepoint cp : alphabet_.codepoints()) alphabet.push_back(format_codepoint(cp));
  auto& providers = j["providers"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < providers_.size(); ++i) providers[providers_[i]] = watermarks_[i].to_codes();
  return j.dump(2) + "\n";
}

Registry Registry::from_json(std::string_view text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoError, std::string("registry JSON: ") + e.what());
  }
  if (j.value("version", 0) != 1) throw Error(ErrorKind::FormatVersionMismatch, "registry version");
  std::vector<Codepoint> cps;
  for (const auto& code : j.at("alphabet")) {
    auto cp = parse_codepoint(code.get<std::string>());
    if (!cp) throw Error(ErrorKind::InvalidArgument, "bad alphabet entry");
    cps.push_back(*cp);
  }
  Registry registry(WatermarkAlphabet(std::move(cps)), j.at("length").get<std::size_t>(),
                    j.at("seed").get<std::uint64_t>(), j.at("min_hamming").get<std::size_t>());
  for (const auto& [name, codes] : j.at("providers").items()) {
    registry.bind(name, Watermark::from_codes(codes.get<std::string>()));
  }
  return registry;
}

void Registry::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << to_json();
}

Registry Registry::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace wasa
