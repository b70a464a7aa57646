#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wasa/model.hpp"
#include "wasa/watermark.hpp"

namespace wasa {

struct GenConfig {
  int top_k_words = 60;
  double temperature = 0.7;
  double repetition_penalty = 1.2;
  double length_penalty = 2.0;  // recorded only: watermark beams have fixed length
  int max_new_tokens = 100;
  int beam_size = 5;
  int top_k_watermarks = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ScoredWatermark {
  Watermark watermark;
  double log_prob = 0.0;
};

struct GenOutput {
  std::string text;          // prompt, a space, then the continuation
  std::string continuation;  // generated part only, watermark codepoints embedded
  std::vector<ScoredWatermark> watermarks;               // best beam of each emitted run
  std::vector<std::vector<ScoredWatermark>> candidates;  // top-k beams of each emitted run
  bool forced = false;
};

/// What to do with a context longer than the model block. KeepTail keeps the
/// most recent tokens, at most half a block, as generation does when re-priming.
enum class ContextPolicy { Reject, KeepTail };

/// Fixed-length (`length` steps) beam search over the watermark head. The
/// context must end with [WTM]. Returns the k best beams by summed log P_w,
/// ties broken by lexicographic codepoint order.
template <typename Scalar>
std::vector<ScoredWatermark> watermark_beam(const Parameters<Scalar>& params, const Vocab& vocab,
                                            std::span<const TokenId> context, std::size_t length, int beam_size, int k);

/// Word sampling with temperature, top-k and repetition penalty; a sampled
/// [WTM] triggers watermark_beam and its best beam is appended. Contexts that
/// outgrow the block are re-encoded from their most recent half.
template <typename Scalar>
GenOutput generate(const Parameters<Scalar>& params, const Vocab& vocab, std::size_t watermark_length,
                   std::string_view prompt, const GenConfig& config);

/// Strips any runs from `text`, appends [WTM] and returns the top-k beams.
template <typename Scalar>
std::vector<ScoredWatermark> enforce_watermark(const Parameters<Scalar>& params, const Vocab& vocab,
                                               std::size_t watermark_length, std::string_view text, int beam_size,
                                               int k = 1, ContextPolicy policy = ContextPolicy::Reject);

}  // namespace wasa
