#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wasa/generator.hpp"
#include "wasa/watermark.hpp"

namespace wasa {

enum class AttackTarget { GeneratedText, Prompt };
enum class AttackFamily { Watermark, Word, Char };
enum class AttackMode { Remove, Modify, Insert, InsertLocalized, Delete, Synonym, Swap };

/// word -> synonyms. File format: one "word<TAB>syn1,syn2,..." entry per line.
struct Lexicon {
  std::map<std::string, std::vector<std::string>> synonyms;
  std::vector<std::string> fill_words;  // insertion source; empty means use the synonym keys

  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::filesystem::path& path);
  std::string serialize() const;
};

struct AttackSpec {
  AttackTarget target = AttackTarget::GeneratedText;
  AttackFamily family = AttackFamily::Watermark;
  AttackMode mode = AttackMode::Remove;
  double strength = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string label() const;
  static AttackSpec from_json(std::string_view json);
  std::string to_json() const;
};

/// remove: delete every alphabet codepoint. modify: replace each with a
/// different alphabet codepoint with probability `rate`.
std::string attack_watermark(std::string_view text, const WatermarkAlphabet& alphabet, AttackMode mode, double rate,
                             std::uint64_t seed);

/// Operates on whitespace-delimited words; watermark runs ride with the word
/// they follow and are never altered.
std::string attack_words(std::string_view text, const WatermarkAlphabet& alphabet, AttackMode mode, double strength,
                         const Lexicon* lexicon, std::uint64_t seed);

/// Operates on visible (non-watermark) codepoints only.
std::string attack_chars(std::string_view text, const WatermarkAlphabet& alphabet, AttackMode mode, double strength,
                         std::uint64_t seed);

std::string apply_attack(std::string_view text, const WatermarkAlphabet& alphabet, const AttackSpec& spec,
                         const Lexicon* lexicon);

/// Strips the (possibly corrupted) runs and re-derives the watermark from the
/// clean text. Returns the top-k regenerated beams.
template <typename Scalar>
std::vector<ScoredWatermark> regenerate_defense(const Parameters<Scalar>& params, const Vocab& vocab,
                                                std::size_t watermark_length, std::string_view attacked_text,
                                                int beam_size, int k = 1,
                                                ContextPolicy policy = ContextPolicy::Reject) {
  return enforce_watermark(params, vocab, watermark_length, attacked_text, beam_size, k, policy);
}

}  // namespace wasa
