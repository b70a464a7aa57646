#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wasa/text.hpp"

namespace wasa {

using ProviderId = std::string;

/// Ordered set of invisible codepoints that watermarks are spelled with.
class WatermarkAlphabet {
 public:
  static constexpr std::size_t kDefaultSize = 6;

  /// The first `size` of U+200B, U+200C, U+200D, U+2062, U+2063, U+2064.
  static WatermarkAlphabet standard(std::size_t size = kDefaultSize);

  explicit WatermarkAlphabet(std::vector<Codepoint> codepoints);

  std::size_t size() const { return codepoints_.size(); }
  std::span<const Codepoint> codepoints() const { return codepoints_; }
  Codepoint at(std::size_t index) const { return codepoints_.at(index); }
  bool contains(Codepoint cp) const { return index_of(cp).has_value(); }
  std::optional<std::size_t> index_of(Codepoint cp) const;

  bool operator==(const WatermarkAlphabet&) const = default;

 private:
  std::vector<Codepoint> codepoints_;
};

struct Watermark {
  std::vector<Codepoint> chars;

  std::size_t size() const { return chars.size(); }
  std::string to_utf8() const { return encode_utf8(chars); }
  /// Space-separated "U+XXXX" codes; never raw invisible characters.
  std::string to_codes() const;
  static Watermark from_codes(std::string_view codes);

  auto operator<=>(const Watermark&) const = default;
};

std::size_t hamming_distance(std::span<const Codepoint> a, std::span<const Codepoint> b);
std::size_t levenshtein_distance(std::span<const Codepoint> a, std::span<const Codepoint> b);

enum class MatchMode { Exact, Soft };

struct MatchResult {
  std::optional<ProviderId> provider;
  bool unanimous = false;
};

/// Immutable bijection between providers and fixed-length watermarks.
class Registry {
 public:
  static constexpr std::size_t kDefaultLength = 10;
  static constexpr std::size_t kDefaultMinDistance = 3;
  static constexpr std::size_t kDrawsPerProvider = 10'000;

  /// Seeded rejection sampling. A candidate is rejected when it is within
  /// `min_hamming` edits (Levenshtein, which lower-bounds Hamming) of an
  /// already bound watermark.
  static Registry create(std::span<const ProviderId> providers, std::size_t length,
                         const WatermarkAlphabet& alphabet, std::uint64_t seed,
                         std::size_t min_hamming = kDefaultMinDistance);

  const Watermark& watermark_of(std::string_view provider) const;
  std::optional<ProviderId> provider_of(const Watermark& w, MatchMode mode = MatchMode::Exact) const;
  MatchResult match_generated(std::span<const Watermark> decoded, MatchMode mode = MatchMode::Exact) const;

  std::span<const ProviderId> providers() const { return providers_; }
  std::optional<std::size_t> ordinal_of(std::string_view provider) const;
  bool contains(std::string_view provider) const { return ordinal_of(provider).has_value(); }
  std::size_t length() const { return length_; }
  std::size_t min_hamming() const { return min_hamming_; }
  std::uint64_t seed() const { return seed_; }
  const WatermarkAlphabet& alphabet() const { return alphabet_; }

  std::string to_json() const;
  static Registry from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static Registry load(const std::filesystem::path& path);

 private:
  Registry(WatermarkAlphabet alphabet, std::size_t length, std::uint64_t seed, std::size_t min_hamming);
  void bind(ProviderId provider, Watermark w);

  WatermarkAlphabet alphabet_;
  std::size_t length_;
  std::uint64_t seed_;
  std::size_t min_hamming_;
  std::vector<ProviderId> providers_;
  std::vector<Watermark> watermarks_;
  std::unordered_map<ProviderId, std::size_t> by_provider_;
  std::unordered_map<std::string, std::size_t> by_watermark_;
};

}  // namespace wasa
