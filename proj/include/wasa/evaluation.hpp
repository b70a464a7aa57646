#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wasa/attacks.hpp"
#include "wasa/generator.hpp"
#include "wasa/marking.hpp"

namespace wasa {

struct TrialSpec {
  std::size_t trials_per_provider = 50;
  std::size_t prompt_chars = 200;
  int gen_tokens = 100;
  std::vector<std::size_t> k_list{1, 3, 5};
  bool enforce = true;

  void validate() const;
  std::size_t max_k() const;
};

struct Trial {
  ProviderId provider;
  std::string prompt;
  std::size_t index = 0;  // position among the provider's trials
};

/// Per provider, the first `trials_per_provider` marked sentences (manifest
/// order) with at least `prompt_chars` visible codepoints; the prompt is the
/// first `prompt_chars` codepoints of the stripped sentence.
std::vector<Trial> build_trials(const MarkedCorpus& marked, const Registry& registry, const TrialSpec& spec);

/// What one attribution attempt produced.
struct TrialOutcome {
  ProviderId truth;
  std::optional<ProviderId> attributed;  // k=1 decision
  bool forced = false;
  std::vector<bool> hit_at_k;            // parallel to TrialSpec::k_list
  std::vector<Watermark> decoded;        // every run used for the k=1 decision
  std::string text;
};

struct ProviderReport {
  std::size_t n_trials = 0;
  std::size_t n_natural = 0;
  std::size_t n_forced = 0;
  std::size_t natural_matches = 0;
  std::size_t forced_matches = 0;
  std::vector<std::size_t> matches;  // per k
  std::vector<double> accuracy;      // per k
  std::size_t misclassified = 0;
  std::size_t incorrect_watermark = 0;
  std::size_t attributed_to = 0;     // k=1 decisions naming this provider
  double precision = 0.0;
  double recall = 0.0;
};

struct AttributionReport {
  std::vector<std::size_t> k_list;
  std::vector<std::pair<ProviderId, ProviderReport>> providers;  // registry order
  std::vector<double> accuracy;                                  // per k, over all trials
  std::size_t n_trials = 0;
  std::size_t n_natural = 0;
  std::size_t n_forced = 0;
  double natural_accuracy = 0.0;
  double forced_accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;

  std::string to_json() const;
};

/// matches / trials.
double attribution_accuracy(double matches, double trials);

/// Aggregates outcomes. Precision of provider i is correct_i over k=1
/// decisions naming i (0 when none do).
AttributionReport summarize(std::span<const ProviderId> providers, std::span<const std::size_t> k_list,
                            std::span<const TrialOutcome> outcomes);

/// Seed of trial `index` of the provider with registry ordinal `ordinal`.
std::uint64_t trial_seed(std::uint64_t seed, std::size_t ordinal, std::size_t index);

/// Generates from the trial prompt and attributes the result.
template <typename Scalar>
TrialOutcome attribute_trial(const Parameters<Scalar>& params, const Vocab& vocab, const Registry& registry,
                             const Trial& trial, const GenConfig& gen, const TrialSpec& spec);

template <typename Scalar>
AttributionReport run_attribution(const Parameters<Scalar>& params, const Vocab& vocab, const Registry& registry,
                                  std::span<const Trial> trials, const GenConfig& gen, const TrialSpec& spec,
                                  std::vector<TrialOutcome>* outcomes = nullptr);

struct ProvenanceResult {
  bool in_training = false;
  std::size_t n_match = 0;
  std::size_t n_texts = 0;
};

/// Enforces a watermark on each text (at most `max_texts` per provider) and
/// counts exact matches with the provider's own watermark.
template <typename Scalar>
std::map<ProviderId, ProvenanceResult> provenance_check(const Parameters<Scalar>& params, const Vocab& vocab,
                                                        const Registry& registry,
                                                        const std::map<ProviderId, std::vector<std::string>>& texts,
                                                        std::size_t max_texts, int beam_size);

struct SweepRow {
  AttackSpec attack;
  AttributionReport report;
};

/// Generated-text attacks: generate, attack, regenerate, attribute.
/// Prompt attacks: attack the prompt, then generate and attribute.
template <typename Scalar>
std::vector<SweepRow> robustness_sweep(const Parameters<Scalar>& params, const Vocab& vocab, const Registry& registry,
                                       std::span<const Trial> trials, std::span<const AttackSpec> attacks,
                                       const Lexicon* lexicon, const GenConfig& gen, const TrialSpec& spec);

/// CSV with columns attack,mode,strength,k,accuracy.
std::string sweep_csv(std::span<const SweepRow> rows);

/// Unique word n-grams over all texts divided by total n-grams; n-grams do
/// not cross text boundaries.
double distinct_n(std::span<const std::string> texts, std::size_t n,
                  const WatermarkAlphabet& alphabet = WatermarkAlphabet::standard());

}  // namespace wasa
