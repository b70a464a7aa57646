#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wasa/watermark.hpp"

namespace wasa {

using TokenId = std::int32_t;

namespace special {
inline constexpr TokenId kUnk = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kPad = 2;
inline constexpr TokenId kWtm = 3;
inline constexpr std::size_t kCount = 4;
inline constexpr std::string_view kNames[kCount] = {"[UNK]", "[BOS]", "[PAD]", "[WTM]"};
}  // namespace special

enum class TokenKind : std::uint8_t { Word, Watermark };

struct TokenStream {
  std::vector<TokenId> ids;
  std::vector<TokenKind> kinds;

  std::size_t size() const { return ids.size(); }
  void push(TokenId id, TokenKind kind) {
    ids.push_back(id);
    kinds.push_back(kind);
  }
  bool operator==(const TokenStream&) const = default;
};

/// Word ids occupy [0, V) with the four specials first; watermark ids occupy
/// [V, V + V') in alphabet order.
class Vocab {
 public:
  static constexpr std::size_t kMinSize = special::kCount + 1;

  /// Specials plus the (target_size - 4) most frequent words, ties lexicographic.
  static Vocab build(std::span<const std::string> texts, std::size_t target_size, const WatermarkAlphabet& alphabet);

  Vocab(std::vector<std::string> words, WatermarkAlphabet alphabet);

  std::size_t word_count() const { return words_.size(); }
  std::size_t watermark_count() const { return alphabet_.size(); }
  std::size_t size() const { return word_count() + watermark_count(); }
  const WatermarkAlphabet& alphabet() const { return alphabet_; }
  std::span<const std::string> words() const { return words_; }

  bool is_valid(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }
  bool is_watermark(TokenId id) const {
    return static_cast<std::size_t>(id) >= word_count() && static_cast<std::size_t>(id) < size();
  }
  TokenKind kind_of(TokenId id) const { return is_watermark(id) ? TokenKind::Watermark : TokenKind::Word; }

  std::optional<TokenId> word_id(std::string_view word) const;
  TokenId watermark_id(Codepoint cp) const;
  const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }
  Codepoint codepoint(TokenId id) const { return alphabet_.at(static_cast<std::size_t>(id) - word_count()); }

  /// Words map to ids ([UNK] when absent); each watermark run becomes [WTM]
  /// followed by its codepoint ids. Punctuation and whitespace are dropped.
  TokenStream encode(std::string_view text) const;

  /// Words joined by single spaces; watermark codepoints attach to the
  /// preceding word without spaces; [WTM], [BOS] and [PAD] emit nothing.
  std::string decode(std::span<const TokenId> ids, bool keep_watermarks) const;

  std::string to_json() const;
  static Vocab from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  WatermarkAlphabet alphabet_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Fixed-length training block. Positions past the content hold [PAD].
struct Block {
  std::vector<TokenId> ids;
  std::vector<TokenKind> kinds;
};

/// Concatenates the streams with a [BOS] before each one and cuts length-k
/// blocks. A [WTM] run never straddles a boundary: it is moved whole into the
/// next block and the gap is padded.
std::vector<Block> pack_blocks(std::span<const TokenStream> streams, std::size_t block_size, const Vocab& vocab);

}  // namespace wasa
