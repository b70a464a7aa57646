#include "wasa/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "wasa/errors.hpp"
#include "wasa/marking.hpp"

namespace wasa {

namespace {

template <typename Scalar>
struct Beam {
  std::vector<Codepoint> chars;
  std::vector<TokenId> ids;
  double score = 0.0;
  DecoderState<Scalar> state;
};

template <typename Scalar>
std::vector<Beam<Scalar>> run_beams(const DecoderState<Scalar>& start, const Vocab& vocab, std::size_t length,
                                    int beam_size) {
  const auto V = static_cast<TokenId>(vocab.word_count());
  std::vector<Beam<Scalar>> beams{Beam<Scalar>{{}, {}, 0.0, start}};

  struct Candidate {
    double score;
    std::size_t parent;
    std::size_t index;
  };
  for (std::size_t step = 0; step < length; ++step) {
    std::vector<Candidate> candidates;
    candidates.reserve(beams.size() * vocab.watermark_count());
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const RowVector<Scalar> lp = log_softmax<Scalar>(beams[b].state.watermark_logits());
      for (Eigen::Index i = 0; i < lp.size(); ++i) {
        candidates.push_back({beams[b].score + static_cast<double>(lp(i)), b, static_cast<std::size_t>(i)});
      }
    }
    const auto& alphabet = vocab.alphabet();
    auto better = [&](const Candidate& a, const Candidate& c) {
      if (a.score != c.score) return a.score > c.score;
      const auto& pa = beams[a.parent].chars;
      const auto& pc = beams[c.parent].chars;
      if (pa != pc) return pa < pc;
      return alphabet.at(a.index) < alphabet.at(c.index);
    };
    const std::size_t keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(beam_size));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);

    std::vector<Beam<Scalar>> next;
    next.reserve(keep);
    const bool last = step + 1 == length;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cand = candidates[c];
      Beam<Scalar> beam{beams[cand.parent].chars, beams[cand.parent].ids, cand.score, beams[cand.parent].state};
      const TokenId id = V + static_cast<TokenId>(cand.index);
      beam.chars.push_back(vocab.alphabet().at(cand.index));
      beam.ids.push_back(id);
      // The final token is only pushed for the beam that generation continues from.
      if (!last) beam.state.push(id);
      next.push_back(std::move(beam));
    }
    beams = std::move(next);
  }
  return beams;
}

template <typename Scalar>
std::vector<ScoredWatermark> to_scored(const std::vector<Beam<Scalar>>& beams, int k) {
  std::vector<ScoredWatermark> out;
  for (std::size_t i = 0; i < beams.size() && static_cast<int>(i) < k; ++i) {
    out.push_back({Watermark{beams[i].chars}, beams[i].score});
  }
  return out;
}

// Drops the oldest tokens so that `needed` more fit, without starting inside a run.
std::vector<TokenId> tail_for_room(const std::vector<TokenId>& context, std::size_t block, std::size_t needed,
                                   const Vocab& vocab) {
  const std::size_t budget = std::max<std::size_t>(1, std::min(block / 2, block - needed));
  std::size_t start = context.size() > budget ? context.size() - budget : 0;
  while (start < context.size() && vocab.is_watermark(context[start])) ++start;
  return {context.begin() + static_cast<std::ptrdiff_t>(start), context.end()};
}

template <typename Scalar>
DecoderState<Scalar> prime(const Parameters<Scalar>& params, std::span<const TokenId> ids) {
  DecoderState<Scalar> state(params);
  for (TokenId id : ids) state.push(id);
  return state;
}

TokenId sample_word(std::vector<double> logits, const std::vector<TokenId>& generated, bool after_run,
                    const GenConfig& config, std::mt19937_64& rng) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  logits[special::kPad] = kNegInf;
  if (after_run) logits[special::kWtm] = kNegInf;
  for (TokenId id : std::set<TokenId>(generated.begin(), generated.end())) {
    if (id < 0 || static_cast<std::size_t>(id) >= logits.size()) continue;
    double& z = logits[static_cast<std::size_t>(id)];
    z = z > 0 ? z / config.repetition_penalty : z * config.repetition_penalty;
  }
  std::vector<TokenId> order(logits.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<TokenId>(i);
  const std::size_t keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(config.top_k_words));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](TokenId a, TokenId b) {
                      const double la = logits[static_cast<std::size_t>(a)];
                      const double lb = logits[static_cast<std::size_t>(b)];
                      return la != lb ? la > lb : a < b;
                    });
  order.resize(keep);
  const double top = logits[static_cast<std::size_t>(order[0])] / config.temperature;
  std::vector<double> weights;
  for (TokenId id : order) {
    const double z = logits[static_cast<std::size_t>(id)];
    weights.push_back(z == kNegInf ? 0.0 : std::exp(z / config.temperature - top));
  }
  double total = 0.0;
  for (double w : weights) total += w;
  std::uniform_real_distribution<double> uniform(0.0, total);
  double u = uniform(rng);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (u < weights[i]) return order[i];
    u -= weights[i];
  }
  return order[0];
}

}  // namespace

void GenConfig::validate() const {
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be positive");
  if (top_k_words < 1) throw Error(ErrorKind::InvalidArgument, "top_k_words must be at least 1");
  if (top_k_watermarks < 1 || beam_size < top_k_watermarks) {
    throw Error(ErrorKind::InvalidArgument, "need beam_size >= top_k_watermarks >= 1");
  }
  if (!(repetition_penalty > 0.0)) throw Error(ErrorKind::InvalidArgument, "repetition penalty must be positive");
  if (max_new_tokens < 0) throw Error(ErrorKind::InvalidArgument, "max_new_tokens must be non-negative");
}

template <typename Scalar>
std::vector<ScoredWatermark> watermark_beam(const Parameters<Scalar>& params, const Vocab& vocab,
                                            std::span<const TokenId> context, std::size_t length, int beam_size,
                                            int k) {
  if (context.empty() || context.back() != special::kWtm) {
    throw Error(ErrorKind::InvalidArgument, "beam context must end with [WTM]");
  }
  if (k < 1 || beam_size < k) throw Error(ErrorKind::InvalidArgument, "need beam_size >= k >= 1");
  if (length == 0) throw Error(ErrorKind::InvalidArgument, "watermark length must be positive");
  if (context.size() + length - 1 > static_cast<std::size_t>(params.config.block)) {
    throw Error(ErrorKind::PromptTooLong, std::to_string(context.size()) + " context tokens leave no room for a " +
                                              std::to_string(length) + "-token watermark");
  }
  return to_scored(run_beams(prime(params, context), vocab, length, beam_size), k);
}

template <typename Scalar>
GenOutput generate(const Parameters<Scalar>& params, const Vocab& vocab, std::size_t watermark_length,
                   std::string_view prompt, const GenConfig& config) {
  config.validate();
  const auto block = static_cast<std::size_t>(params.config.block);
  if (watermark_length + 1 > block) throw Error(ErrorKind::RunLongerThanBlock, "watermark does not fit the block");

  std::vector<TokenId> context = vocab.encode(prompt).ids;
  if (context.size() > block - 1) {
    throw Error(ErrorKind::PromptTooLong,
                std::to_string(context.size()) + " prompt tokens exceed " + std::to_string(block - 1));
  }
  if (context.empty()) context.push_back(special::kBos);
  auto state = prime(params, context);

  GenOutput out;
  std::vector<TokenId> generated;
  std::mt19937_64 rng(config.seed);
  auto make_room = [&](std::size_t needed) {
    if (state.length() + needed <= block) return;
    context = tail_for_room(context, block, needed, vocab);
    state = prime(params, context);
  };

  while (generated.size() < static_cast<std::size_t>(config.max_new_tokens)) {
    make_room(1);
    const RowVector<Scalar> z = state.word_logits();
    std::vector<double> logits(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) logits[static_cast<std::size_t>(i)] = static_cast<double>(z(i));
    const bool after_run = !context.empty() && vocab.is_watermark(context.back());
    const TokenId id = sample_word(std::move(logits), generated, after_run, config, rng);
    if (id == special::kBos) break;

    if (id != special::kWtm) {
      state.push(id);
      context.push_back(id);
      generated.push_back(id);
      continue;
    }

    make_room(watermark_length + 1);
    state.push(special::kWtm);
    context.push_back(special::kWtm);
    generated.push_back(special::kWtm);
    auto beams = run_beams(state, vocab, watermark_length, config.beam_size);
    out.watermarks.push_back({Watermark{beams.front().chars}, beams.front().score});
    out.candidates.push_back(to_scored(beams, config.top_k_watermarks));
    state = std::move(beams.front().state);
    state.push(beams.front().ids.back());
    context.insert(context.end(), beams.front().ids.begin(), beams.front().ids.end());
    generated.insert(generated.end(), beams.front().ids.begin(), beams.front().ids.end());
  }

  out.continuation = vocab.decode(generated, true);
  out.text = std::string(prompt);
  if (!out.continuation.empty()) {
    // A run emitted right after the prompt attaches to the prompt's last word.
    if (!out.text.empty() && generated.front() != special::kWtm) out.text.push_back(' ');
    out.text += out.continuation;
  }
  return out;
}

template <typename Scalar>
std::vector<ScoredWatermark> enforce_watermark(const Parameters<Scalar>& params, const Vocab& vocab,
                                               std::size_t watermark_length, std::string_view text, int beam_size,
                                               int k, ContextPolicy policy) {
  const auto block = static_cast<std::size_t>(params.config.block);
  const auto clean = strip_watermarks(text, vocab.alphabet()).clean;
  std::vector<TokenId> ids = vocab.encode(clean).ids;
  const std::size_t room = block + 1 - watermark_length;  // context tokens including [WTM]
  if (ids.size() + 1 > room) {
    if (policy == ContextPolicy::Reject) {
      throw Error(ErrorKind::PromptTooLong, std::to_string(ids.size()) + " tokens exceed " + std::to_string(room - 1));
    }
    ids = tail_for_room(ids, block, watermark_length + 1, vocab);
  }
  ids.push_back(special::kWtm);
  return watermark_beam(params, vocab, ids, watermark_length, beam_size, k);
}

#define WASA_INSTANTIATE_GENERATOR(Scalar)                                                                         \
  template std::vector<ScoredWatermark> watermark_beam<Scalar>(const Parameters<Scalar>&, const Vocab&,            \
                                                               std::span<const TokenId>, std::size_t, int, int);   \
  template GenOutput generate<Scalar>(const Parameters<Scalar>&, const Vocab&, std::size_t, std::string_view,     \
                                      const GenConfig&);                                                          \
  template std::vector<ScoredWatermark> enforce_watermark<Scalar>(const Parameters<Scalar>&, const Vocab&,         \
                                                                  std::size_t, std::string_view, int, int,        \
                                                                  ContextPolicy);

WASA_INSTANTIATE_GENERATOR(float)
WASA_INSTANTIATE_GENERATOR(double)

#undef WASA_INSTANTIATE_GENERATOR

}  // namespace wasa
