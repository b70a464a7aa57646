#include "wasa/text.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "wasa/errors.hpp"

namespace wasa {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
    case ErrorKind::UnknownProvider: return "UnknownProvider";
    case ErrorKind::WatermarkInInput: return "WatermarkInInput";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InvalidId: return "InvalidId";
    case ErrorKind::RunLongerThanBlock: return "RunLongerThanBlock";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::PromptTooLong: return "PromptTooLong";
    case ErrorKind::MissingLexicon: return "MissingLexicon";
    case ErrorKind::InsufficientData: return "InsufficientData";
  }
  return "Unknown";
}

std::vector<DecodedCodepoint> decode_utf8(std::string_view text) {
  std::vector<DecodedCodepoint> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    Codepoint cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t j = 1; ok && j < len; ++j) {
      const auto b = static_cast<unsigned char>(text[i + j]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (!ok) {
      out.push_back({0xFFFD, i, 1});
      ++i;
      continue;
    }
    out.push_back({cp, i, len});
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, Codepoint cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode_utf8(std::span<const Codepoint> cps) {
  std::string out;
  for (Codepoint cp : cps) append_utf8(out, cp);
  return out;
}

std::string format_codepoint(Codepoint cp) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
  return buf;
}

std::optional<Codepoint> parse_codepoint(std::string_view code) {
  if (code.size() < 3 || (code[0] != 'U' && code[0] != 'u') || code[1] != '+') return std::nullopt;
  unsigned value = 0;
  const auto* first = code.data() + 2;
  const auto* last = code.data() + code.size();
  auto [ptr, ec] = std::from_chars(first, last, value, 16);
  if (ec != std::errc{} || ptr != last || value > 0x10FFFF) return std::nullopt;
  return static_cast<Codepoint>(value);
}

bool is_space(Codepoint cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' || cp == 0xA0;
}

bool is_ascii_punct(Codepoint cp) {
  return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
         (cp >= 0x7B && cp <= 0x7E);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<WordSpan> split_words(std::string_view text, std::span<const Codepoint> excluded) {
  std::vector<WordSpan> words;
  std::size_t start = 0;
  bool in_word = false;
  for (const auto& d : decode_utf8(text)) {
    const bool boundary = is_space(d.value) || is_ascii_punct(d.value) ||
                          std::find(excluded.begin(), excluded.end(), d.value) != excluded.end();
    if (boundary) {
      if (in_word) words.push_back({ascii_lower(text.substr(start, d.offset - start)), start, d.offset});
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      start = d.offset;
    }
  }
  if (in_word) words.push_back({ascii_lower(text.substr(start)), start, text.size()});
  return words;
}

std::vector<std::string> words_of(std::string_view text, std::span<const Codepoint> excluded) {
  std::vector<std::string> out;
  for (auto& w : split_words(text, excluded)) out.push_back(std::move(w.text));
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer applied over the tuple.
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0xD6E8FEB86659FD93ULL));
}

}  // namespace wasa
