#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wasa/evaluation.hpp"
#include "wasa/synthbench.hpp"
#include "wasa/trainer.hpp"

namespace wasa {

/// Every knob of a synthetic benchmark run. JSON keys mirror the field names.
struct ExperimentConfig {
  SynthConfig synth;
  SelectionConfig selection;
  ModelConfig model;  // vocab_words is filled in from the built vocabulary
  TrainConfig train;
  GenConfig gen;
  TrialSpec trials;
  std::size_t vocab_size = 0;  // 0 keeps every word
  std::size_t watermark_length = Registry::kDefaultLength;
  std::size_t min_hamming = Registry::kDefaultMinDistance;
  bool watermark = true;  // false trains on the unmarked corpus
  std::uint64_t seed = 0;

  /// Derives every component seed from `seed`.
  void reseed(std::uint64_t seed);

  std::string to_json() const;
  static ExperimentConfig from_json(std::string_view json);
};

struct Experiment {
  SynthBench bench;
  Registry registry;
  MarkedCorpus marked;
  Vocab vocab;
  std::vector<Block> train_blocks;
  std::vector<Block> eval_blocks;  // unmarked held-out documents of the trained providers
  Parameters<float> params;
  TrainLog log;
};

/// Token streams, one per document.
std::vector<TokenStream> encode_corpora(const Vocab& vocab, std::span<const ProviderCorpus> corpora);
std::vector<std::string> corpus_texts(std::span<const ProviderCorpus> corpora);

/// synthbench -> registry -> marking -> vocab -> blocks -> training.
Experiment run_experiment(const ExperimentConfig& config, const StepCallback& on_step = {});

}  // namespace wasa
