#include "wasa/experiment.hpp"

#include <limits>

#include <json.hpp>

#include "wasa/errors.hpp"

namespace wasa {

void ExperimentConfig::reseed(std::uint64_t s) {
  seed = s;
  synth.seed = mix_seed(s, 1);
  selection.seed = mix_seed(s, 2);
  model.seed = mix_seed(s, 3);
  train.seed = mix_seed(s, 4);
  gen.seed = mix_seed(s, 5);
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["synth"] = {{"providers", synth.providers},
                {"heldout_providers", synth.heldout_providers},
                {"overlap", synth.overlap},
                {"train_docs", synth.train_docs},
                {"eval_docs", synth.eval_docs},
                {"sentences_per_doc", synth.sentences_per_doc},
                {"shared_words", synth.shared_words},
                {"keywords_per_provider", synth.keywords_per_provider},
                {"min_sentence_chars", synth.min_sentence_chars}};
  j["selection"] = {{"fraction", selection.fraction},
                    {"strategy", selection.strategy == SelectionStrategy::TfIdf ? "tfidf" : "random"}};
  j["model"] = {{"embed", model.embed},
                {"layers", model.layers},
                {"heads", model.heads},
                {"block", model.block},
                {"frozen_layers", model.frozen_layers}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"grad_accumulation", train.grad_accumulation},
                {"linear_decay", train.linear_decay}};
  j["gen"] = {{"top_k_words", gen.top_k_words},
              {"temperature", gen.temperature},
              {"repetition_penalty", gen.repetition_penalty},
              {"length_penalty", gen.length_penalty},
              {"max_new_tokens", gen.max_new_tokens},
              {"beam_size", gen.beam_size}};
  j["trials"] = {{"trials_per_provider", trials.trials_per_provider},
                 {"prompt_chars", trials.prompt_chars},
                 {"gen_tokens", trials.gen_tokens},
                 {"k_list", trials.k_list},
                 {"enforce", trials.enforce}};
  j["vocab_size"] = vocab_size;
  j["watermark_length"] = watermark_length;
  j["min_hamming"] = min_hamming;
  j["watermark"] = watermark;
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(std::string_view text) {
  ExperimentConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.reseed(j.value("seed", std::uint64_t{0}));
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      c.synth.providers = s.value("providers", c.synth.providers);
      c.synth.heldout_providers = s.value("heldout_providers", c.synth.heldout_providers);
      c.synth.overlap = s.value("overlap", c.synth.overlap);
      c.synth.train_docs = s.value("train_docs", c.synth.train_docs);
      c.synth.eval_docs = s.value("eval_docs", c.synth.eval_docs);
      c.synth.sentences_per_doc = s.value("sentences_per_doc", c.synth.sentences_per_doc);
      c.synth.shared_words = s.value("shared_words", c.synth.shared_words);
      c.synth.keywords_per_provider = s.value("keywords_per_provider", c.synth.keywords_per_provider);
      c.synth.min_sentence_chars = s.value("min_sentence_chars", c.synth.min_sentence_chars);
    }
    if (j.contains("selection")) {
      const auto& s = j["selection"];
      c.selection.fraction = s.value("fraction", c.selection.fraction);
      const auto strategy = s.value("strategy", std::string("tfidf"));
      if (strategy != "tfidf" && strategy != "random") {
        throw Error(ErrorKind::InvalidArgument, "unknown selection strategy '" + strategy + "'");
      }
      c.selection.strategy = strategy == "tfidf" ? SelectionStrategy::TfIdf : SelectionStrategy::Random;
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.embed = m.value("embed", c.model.embed);
      c.model.layers = m.value("layers", c.model.layers);
      c.model.heads = m.value("heads", c.model.heads);
      c.model.block = m.value("block", c.model.block);
      c.model.frozen_layers = m.value("frozen_layers", c.model.frozen_layers);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.grad_accumulation = t.value("grad_accumulation", c.train.grad_accumulation);
      c.train.linear_decay = t.value("linear_decay", c.train.linear_decay);
    }
    if (j.contains("gen")) {
      const auto& g = j["gen"];
      c.gen.top_k_words = g.value("top_k_words", c.gen.top_k_words);
      c.gen.temperature = g.value("temperature", c.gen.temperature);
      c.gen.repetition_penalty = g.value("repetition_penalty", c.gen.repetition_penalty);
      c.gen.length_penalty = g.value("length_penalty", c.gen.length_penalty);
      c.gen.max_new_tokens = g.value("max_new_tokens", c.gen.max_new_tokens);
      c.gen.beam_size = g.value("beam_size", c.gen.beam_size);
    }
    if (j.contains("trials")) {
      const auto& t = j["trials"];
      c.trials.trials_per_provider = t.value("trials_per_provider", c.trials.trials_per_provider);
      c.trials.prompt_chars = t.value("prompt_chars", c.trials.prompt_chars);
      c.trials.gen_tokens = t.value("gen_tokens", c.trials.gen_tokens);
      c.trials.k_list = t.value("k_list", c.trials.k_list);
      c.trials.enforce = t.value("enforce", c.trials.enforce);
    }
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.watermark_length = j.value("watermark_length", c.watermark_length);
    c.min_hamming = j.value("min_hamming", c.min_hamming);
    c.watermark = j.value("watermark", c.watermark);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
  return c;
}

std::vector<TokenStream> encode_corpora(const Vocab& vocab, std::span<const ProviderCorpus> corpora) {
  std::vector<TokenStream> streams;
  for (const auto& c : corpora) {
    for (const auto& d : c.documents) streams.push_back(vocab.encode(d.text));
  }
  return streams;
}

std::vector<std::string> corpus_texts(std::span<const ProviderCorpus> corpora) {
  std::vector<std::string> texts;
  for (const auto& c : corpora) {
    for (const auto& d : c.documents) texts.push_back(d.text);
  }
  return texts;
}

namespace {

Registry make_registry(const ExperimentConfig& config, const SynthBench& bench) {
  std::vector<ProviderId> providers;
  for (const auto& c : bench.train) providers.push_back(c.provider);
  for (const auto& c : bench.heldout) providers.push_back(c.provider);
  return Registry::create(providers, config.watermark_length, WatermarkAlphabet::standard(), mix_seed(config.seed, 6),
                          config.min_hamming);
}

MarkedCorpus mark(const ExperimentConfig& config, const SynthBench& bench, const Registry& registry) {
  if (!config.watermark) return MarkedCorpus{bench.train, {}};
  return build_marked_corpus(bench.train, registry, config.selection);
}

}  // namespace

Experiment run_experiment(const ExperimentConfig& config, const StepCallback& on_step) {
  auto bench = make_synthbench(config.synth);
  auto registry = make_registry(config, bench);
  auto marked = mark(config, bench, registry);
  const auto texts = corpus_texts(marked.corpora);
  const std::size_t target = config.vocab_size ? config.vocab_size : std::numeric_limits<std::size_t>::max();
  auto vocab = Vocab::build(texts, target, registry.alphabet());

  const auto block = static_cast<std::size_t>(config.model.block);
  const auto train_streams = encode_corpora(vocab, marked.corpora);
  const auto eval_streams = encode_corpora(vocab, bench.eval);
  auto train_blocks = pack_blocks(train_streams, block, vocab);
  auto eval_blocks = pack_blocks(eval_streams, block, vocab);

  ModelConfig model = config.model;
  model.vocab_words = static_cast<int>(vocab.word_count());
  model.vocab_watermark = static_cast<int>(vocab.watermark_count());
  auto params = init_parameters<float>(model, model.seed);
  auto log = train(params, std::span<const Block>(train_blocks), config.train, on_step);

  return Experiment{std::move(bench),        std::move(registry),    std::move(marked), std::move(vocab),
                    std::move(train_blocks), std::move(eval_blocks), std::move(params), std::move(log)};
}

}  // namespace wasa
