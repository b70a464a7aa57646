#pragma once

// UTF-8 helpers and the word rule shared by the tokenizer, TF-IDF, BM25 and
// the metrics. A "word" is a maximal run of codepoints that are neither
// whitespace, ASCII punctuation, nor one of the supplied excluded codepoints.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wasa {

using Codepoint = char32_t;

struct DecodedCodepoint {
  Codepoint value;
  std::size_t offset;  // byte offset of the first unit
  std::size_t length;  // number of bytes
};

// Decodes UTF-8; malformed bytes are surfaced as U+FFFD of length 1.
std::vector<DecodedCodepoint> decode_utf8(std::string_view text);
void append_utf8(std::string& out, Codepoint cp);
std::string encode_utf8(std::span<const Codepoint> cps);

// "U+200B" style rendering and parsing.
std::string format_codepoint(Codepoint cp);
std::optional<Codepoint> parse_codepoint(std::string_view code);

bool is_space(Codepoint cp);
bool is_ascii_punct(Codepoint cp);

// Lowercases ASCII letters only; other codepoints pass through.
std::string ascii_lower(std::string_view s);

struct WordSpan {
  std::string text;  // lowercased
  std::size_t begin;
  std::size_t end;
};

std::vector<WordSpan> split_words(std::string_view text, std::span<const Codepoint> excluded = {});
std::vector<std::string> words_of(std::string_view text, std::span<const Codepoint> excluded = {});

// Deterministic seed derivation so parallel and serial runs agree.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace wasa
