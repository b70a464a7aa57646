// Command-line front end for the watermarking pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wasa/attacks.hpp"
#include "wasa/bm25.hpp"
#include "wasa/checkpoint.hpp"
#include "wasa/corpus_io.hpp"
#include "wasa/errors.hpp"
#include "wasa/evaluation.hpp"
#include "wasa/experiment.hpp"
#include "wasa/synthbench.hpp"

namespace fs = std::filesystem;
using namespace wasa;
using Json = nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string corpus, registry, vocab, checkpoint, manifest, lexicon, text, prompt, out, log;
  std::string names;
  std::optional<std::string> strategy;
  std::vector<std::string> attacks;
  std::string k_list = "1,3,5";
  std::optional<double> fraction;
  std::optional<double> overlap;
  std::optional<std::size_t> providers;
  std::optional<std::size_t> heldout;
  std::optional<std::size_t> length;
  std::optional<std::size_t> min_hamming;
  std::size_t alphabet_size = WatermarkAlphabet::kDefaultSize;
  std::optional<std::size_t> vocab_size;
  std::size_t max_texts = 50;
  int epochs = -1;
  double learning_rate = -1;
  int batch_size = -1;
  bool lr_decay = false;
  bool raw = false;
  bool soft = false;
  bool enforce = false;
};

// Human-facing JSON: non-ASCII is escaped so invisible codepoints never reach a terminal raw.
void print_json(const Json& j) { std::cout << j.dump(2, ' ', true) << "\n"; }

void emit(const Options& o, const std::string& content) {
  if (o.out.empty()) {
    std::cout << content;
  } else {
    write_text_file(o.out, content);
  }
}

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) c = ExperimentConfig::from_json(read_text_file(o.config_path));
  c.reseed(o.seed.value_or(c.seed));
  if (o.providers) c.synth.providers = *o.providers;
  if (o.heldout) c.synth.heldout_providers = *o.heldout;
  if (o.overlap) c.synth.overlap = *o.overlap;
  if (o.fraction) c.selection.fraction = *o.fraction;
  if (o.strategy) {
    if (*o.strategy != "tfidf" && *o.strategy != "random") {
      throw Error(ErrorKind::InvalidArgument, "--strategy must be tfidf or random");
    }
    c.selection.strategy = *o.strategy == "tfidf" ? SelectionStrategy::TfIdf : SelectionStrategy::Random;
  }
  if (o.length) c.watermark_length = *o.length;
  if (o.min_hamming) c.min_hamming = *o.min_hamming;
  if (o.vocab_size) c.vocab_size = *o.vocab_size;
  if (o.epochs >= 0) c.train.epochs = o.epochs;
  if (o.learning_rate > 0) c.train.learning_rate = o.learning_rate;
  if (o.batch_size > 0) c.train.batch_size = o.batch_size;
  if (o.lr_decay) c.train.linear_decay = true;
  return c;
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(static_cast<std::size_t>(std::stoul(item)));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "bad --k entry '" + item + "'");
    }
  }
  return out;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorKind::InvalidArgument, std::string(flag) + " is required");
}

Json watermark_json(const ScoredWatermark& w) { return Json{{"codes", w.watermark.to_codes()}, {"logprob", w.log_prob}}; }

int cmd_synthbench(const Options& o) {
  require(o.out, "--out");
  const SynthConfig s = load_config(o).synth;
  const auto bench = make_synthbench(s);
  const fs::path root = o.out;
  write_corpus(root / "train", bench.train);
  write_corpus(root / "eval", bench.eval);
  if (!bench.heldout.empty()) write_corpus(root / "heldout", bench.heldout);
  write_text_file(root / "lexicon.tsv", bench.lexicon.serialize());
  print_json({{"providers", s.providers}, {"heldout", s.heldout_providers}, {"overlap", s.overlap},
              {"out", root.string()}});
  return 0;
}

int cmd_registry(const Options& o) {
  require(o.out, "--out");
  std::vector<ProviderId> names;
  if (!o.names.empty()) {
    std::stringstream in(o.names);
    std::string n;
    while (std::getline(in, n, ',')) names.push_back(n);
  } else {
    require(o.corpus, "--corpus or --names");
    for (const auto& c : read_corpus(o.corpus)) names.push_back(c.provider);
  }
  const auto c = load_config(o);
  const auto registry = Registry::create(names, c.watermark_length, WatermarkAlphabet::standard(o.alphabet_size),
                                         mix_seed(c.seed, 6), c.min_hamming);
  registry.save(o.out);
  Json j;
  for (const auto& p : registry.providers()) j[p] = registry.watermark_of(p).to_codes();
  print_json(j);
  return 0;
}

int cmd_mark(const Options& o) {
  require(o.corpus, "--corpus");
  require(o.registry, "--registry");
  require(o.out, "--out");
  const auto registry = Registry::load(o.registry);
  const auto corpora = read_corpus(o.corpus);
  const auto sel = load_config(o).selection;
  const auto marked = build_marked_corpus(corpora, registry, sel);
  const fs::path out = o.out;
  write_corpus(out / "corpus", marked.corpora);
  write_manifest(out / "manifest.jsonl", marked.manifest);
  print_json({{"marked_sentences", marked.manifest.size()}, {"out", out.string()}});
  return 0;
}

int cmd_vocab(const Options& o) {
  require(o.corpus, "--corpus");
  require(o.out, "--out");
  const auto corpora = read_corpus(o.corpus);
  const auto requested = load_config(o).vocab_size;
  const auto size = requested ? requested : std::numeric_limits<std::size_t>::max();
  const auto vocab = Vocab::build(corpus_texts(corpora), size, WatermarkAlphabet::standard(o.alphabet_size));
  vocab.save(o.out);
  print_json({{"words", vocab.word_count()}, {"watermark_tokens", vocab.watermark_count()}});
  return 0;
}

int cmd_train(const Options& o) {
  require(o.corpus, "--corpus");
  require(o.vocab, "--vocab");
  require(o.out, "--out");
  const auto config = load_config(o);
  const auto vocab = Vocab::load(o.vocab);
  const auto corpora = read_corpus(o.corpus);
  const auto blocks =
      pack_blocks(encode_corpora(vocab, corpora), static_cast<std::size_t>(config.model.block), vocab);
  ModelConfig model = config.model;
  model.vocab_words = static_cast<int>(vocab.word_count());
  model.vocab_watermark = static_cast<int>(vocab.watermark_count());
  auto params = init_parameters<float>(model, model.seed);
  const auto log = train(params, std::span<const Block>(blocks), config.train, [](const TrainRecord& r) {
    if (r.step % 100 == 0) {
      std::fprintf(stderr, "step %zu loss_lm %.4f loss_wtm %.4f\n", r.step, r.loss_lm, r.loss_wtm);
    }
  });
  save_checkpoint(params, o.out);
  if (!o.log.empty()) write_text_file(o.log, log.to_jsonl());
  print_json({{"steps", log.records.size()}, {"blocks", blocks.size()}, {"checkpoint", o.out}});
  return 0;
}

struct Loaded {
  Parameters<float> params;
  Vocab vocab;
  Registry registry;
};

Loaded load_model(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.vocab, "--vocab");
  require(o.registry, "--registry");
  return {load_checkpoint(o.checkpoint), Vocab::load(o.vocab), Registry::load(o.registry)};
}

int cmd_generate(const Options& o) {
  const auto m = load_model(o);
  const auto config = load_config(o);
  const std::string prompt = !o.prompt.empty() ? o.prompt : (o.text.empty() ? "" : read_text_file(o.text));
  GenConfig gen = config.gen;
  gen.top_k_watermarks = std::max(gen.top_k_watermarks, 1);
  auto out = generate(m.params, m.vocab, m.registry.length(), prompt, gen);
  if (out.watermarks.empty() && o.enforce) {
    const auto forced = enforce_watermark(m.params, m.vocab, m.registry.length(), out.text, gen.beam_size, 1,
                                          ContextPolicy::KeepTail);
    out.watermarks.push_back(forced.front());
    out.forced = true;
  }
  if (o.raw) {
    std::cout << out.text << "\n";
    return 0;
  }
  Json j;
  j["text"] = out.text;
  j["watermarks"] = Json::array();
  for (const auto& w : out.watermarks) j["watermarks"].push_back(watermark_json(w));
  j["forced"] = out.forced;
  print_json(j);
  return 0;
}

int cmd_attribute(const Options& o) {
  require(o.text, "--text");
  require(o.registry, "--registry");
  const auto registry = Registry::load(o.registry);
  const auto text = read_text_file(o.text);
  std::vector<Watermark> decoded;
  for (const auto& run : strip_watermarks(text, registry.alphabet()).runs) decoded.push_back({run.codepoints});
  bool forced = false;
  if (decoded.empty() && !o.checkpoint.empty()) {
    const auto m = load_model(o);
    decoded.push_back(enforce_watermark(m.params, m.vocab, registry.length(), text, load_config(o).gen.beam_size, 1,
                                        ContextPolicy::KeepTail)
                          .front()
                          .watermark);
    forced = true;
  }
  const auto mode = o.soft ? MatchMode::Soft : MatchMode::Exact;
  const auto result = registry.match_generated(decoded, mode);
  Json j;
  j["provider"] = result.provider ? Json(*result.provider) : Json(nullptr);
  j["watermarks"] = Json::array();
  for (const auto& w : decoded) j["watermarks"].push_back(w.to_codes());
  j["mode"] = o.soft ? "soft" : "exact";
  j["forced"] = forced;
  print_json(j);
  return 0;
}

int cmd_attack(const Options& o) {
  require(o.text, "--text");
  if (o.attacks.size() != 1) throw Error(ErrorKind::InvalidArgument, "attack takes exactly one --attack SPEC-JSON");
  const auto spec = AttackSpec::from_json(o.attacks.front());
  std::optional<Lexicon> lexicon;
  if (!o.lexicon.empty()) lexicon = Lexicon::load(o.lexicon);
  const auto alphabet = o.registry.empty() ? WatermarkAlphabet::standard() : Registry::load(o.registry).alphabet();
  const auto attacked = apply_attack(read_text_file(o.text), alphabet, spec, lexicon ? &*lexicon : nullptr);
  if (!o.out.empty()) {
    write_text_file(o.out, attacked);
    print_json({{"attack", spec.label()}, {"out", o.out}});
  } else if (o.raw) {
    std::cout << attacked << "\n";
  } else {
    print_json({{"attack", spec.label()}, {"text", attacked}});
  }
  return 0;
}

MarkedCorpus load_marked(const Options& o) {
  require(o.corpus, "--corpus");
  fs::path corpus = fs::path(o.corpus).lexically_normal();
  if (corpus.filename().empty()) corpus = corpus.parent_path();
  const fs::path manifest = o.manifest.empty() ? corpus.parent_path() / "manifest.jsonl" : fs::path(o.manifest);
  return MarkedCorpus{read_corpus(o.corpus), read_manifest(manifest)};
}

int cmd_evaluate(const Options& o) {
  const auto m = load_model(o);
  const auto config = load_config(o);
  TrialSpec spec = config.trials;
  spec.k_list = parse_k_list(o.k_list);
  const auto marked = load_marked(o);
  const auto trials = build_trials(marked, m.registry, spec);
  if (o.attacks.empty()) {
    const auto report = run_attribution(m.params, m.vocab, m.registry, std::span<const Trial>(trials), config.gen, spec);
    emit(o, report.to_json());
    return 0;
  }
  std::vector<AttackSpec> attacks;
  for (const auto& a : o.attacks) attacks.push_back(AttackSpec::from_json(a));
  std::optional<Lexicon> lexicon;
  if (!o.lexicon.empty()) lexicon = Lexicon::load(o.lexicon);
  const auto rows = robustness_sweep(m.params, m.vocab, m.registry, std::span<const Trial>(trials),
                                     std::span<const AttackSpec>(attacks), lexicon ? &*lexicon : nullptr, config.gen,
                                     spec);
  emit(o, sweep_csv(rows));
  return 0;
}

int cmd_provenance(const Options& o) {
  const auto m = load_model(o);
  require(o.corpus, "--corpus");
  std::map<ProviderId, std::vector<std::string>> texts;
  for (const auto& c : read_corpus(o.corpus)) {
    auto& list = texts[c.provider];
    for (const auto& d : c.documents) {
      for (const auto& s : segment_sentences(strip_watermarks(d.text, m.registry.alphabet()).clean)) {
        list.push_back(s.text);
      }
    }
  }
  const auto result = provenance_check(m.params, m.vocab, m.registry, texts, o.max_texts, load_config(o).gen.beam_size);
  Json j;
  for (const auto& [provider, r] : result) {
    j[provider] = {{"in_training", r.in_training}, {"n_match", r.n_match}, {"n_texts", r.n_texts}};
  }
  emit(o, j.dump(2) + "\n");
  return 0;
}

int cmd_baseline(const Options& o) {
  require(o.corpus, "--corpus");
  const auto alphabet = WatermarkAlphabet::standard(o.alphabet_size);
  auto corpora = read_corpus(o.corpus);
  for (auto& c : corpora) {
    for (auto& d : c.documents) d.text = strip_watermarks(d.text, alphabet).clean;
  }
  const auto index = Bm25Index::build(corpora, alphabet);
  if (o.text.empty()) {
    require(o.out, "--out or --text");
    index.save(o.out);
    print_json({{"documents", index.documents().size()}, {"avgdl", index.avgdl()}, {"out", o.out}});
    return 0;
  }
  const auto k = parse_k_list(o.k_list);
  Json j = Json::array();
  for (const auto& [provider, score] : index.attribute(read_text_file(o.text), *std::max_element(k.begin(), k.end()))) {
    j.push_back({{"provider", provider}, {"score", score}});
  }
  print_json(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermark-based source attribution for language models"};
  app.require_subcommand(1);
  Options o;
  if (const char* env = std::getenv("WASA_SEED")) {
    try {
      o.seed = std::stoull(env);
    } catch (const std::exception&) {
      std::cerr << "WASA_SEED must be an unsigned integer\n";
      return kExitUsage;
    }
  }
  app.add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "seed for all randomness (default: $WASA_SEED, else the config seed, else 0)");

  auto* synth = app.add_subcommand("synthbench", "write a synthetic multi-provider corpus");
  synth->add_option("--providers", o.providers, "number of providers");
  synth->add_option("--heldout", o.heldout, "providers written to heldout/ only");
  synth->add_option("--overlap", o.overlap, "shared keyword fraction in [0, 1]");
  synth->add_option("--out", o.out, "output directory");

  auto* reg = app.add_subcommand("registry", "assign a watermark to every provider");
  reg->add_option("--corpus", o.corpus, "corpus directory or JSONL (provider names)");
  reg->add_option("--names", o.names, "comma-separated provider names");
  reg->add_option("--length", o.length, "watermark length");
  reg->add_option("--min-hamming", o.min_hamming, "minimum pairwise distance");
  reg->add_option("--alphabet-size", o.alphabet_size, "number of invisible codepoints (2..6)");
  reg->add_option("--out", o.out, "registry JSON path");

  auto* mark = app.add_subcommand("mark", "embed watermarks into a corpus");
  mark->add_option("--corpus", o.corpus, "clean corpus");
  mark->add_option("--registry", o.registry, "registry JSON");
  mark->add_option("--fraction", o.fraction, "fraction of sentences to mark");
  mark->add_option("--strategy", o.strategy, "tfidf or random");
  mark->add_option("--out", o.out, "output directory (corpus/ and manifest.jsonl)");

  auto* vocab = app.add_subcommand("vocab", "build the word vocabulary");
  vocab->add_option("--corpus", o.corpus, "corpus");
  vocab->add_option("--size", o.vocab_size, "word vocabulary size including specials (0 = all)");
  vocab->add_option("--alphabet-size", o.alphabet_size, "number of invisible codepoints");
  vocab->add_option("--out", o.out, "vocab JSON path");

  auto* tr = app.add_subcommand("train", "train a model on a marked corpus");
  tr->add_option("--corpus", o.corpus, "marked corpus");
  tr->add_option("--vocab", o.vocab, "vocab JSON");
  tr->add_option("--epochs", o.epochs, "epochs");
  tr->add_option("--lr", o.learning_rate, "learning rate");
  tr->add_option("--batch", o.batch_size, "batch size");
  tr->add_flag("--lr-decay", o.lr_decay, "decay the learning rate linearly to zero");
  tr->add_option("--log", o.log, "train log JSONL");
  tr->add_option("--out", o.out, "checkpoint path");

  auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", o.checkpoint, "checkpoint");
    cmd->add_option("--vocab", o.vocab, "vocab JSON");
    cmd->add_option("--registry", o.registry, "registry JSON");
  };

  auto* gen = app.add_subcommand("generate", "generate text with embedded watermarks");
  add_model(gen);
  gen->add_option("--prompt", o.prompt, "prompt text");
  gen->add_option("--text", o.text, "prompt file");
  gen->add_flag("--enforce", o.enforce, "force a watermark when none was generated");
  gen->add_flag("--raw", o.raw, "print only the text (contains invisible codepoints)");

  auto* attr = app.add_subcommand("attribute", "attribute a text to its provider");
  add_model(attr);
  attr->add_option("--text", o.text, "text file");
  attr->add_flag("--soft", o.soft, "soft (Levenshtein) matching");

  auto* att = app.add_subcommand("attack", "perturb a text");
  att->add_option("--text", o.text, "text file");
  att->add_option("--attack", o.attacks, "attack spec JSON");
  att->add_option("--lexicon", o.lexicon, "lexicon TSV");
  att->add_option("--registry", o.registry, "registry JSON (alphabet)");
  att->add_option("--out", o.out, "write the attacked text here");
  att->add_flag("--raw", o.raw, "print the attacked text as is");

  auto* eval = app.add_subcommand("evaluate", "run the attribution protocol");
  add_model(eval);
  eval->add_option("--corpus", o.corpus, "marked corpus (manifest.jsonl next to it)");
  eval->add_option("--manifest", o.manifest, "manifest JSONL");
  eval->add_option("--k", o.k_list, "comma-separated top-k list");
  eval->add_option("--attack", o.attacks, "attack spec JSON (repeatable; switches to a robustness sweep)");
  eval->add_option("--lexicon", o.lexicon, "lexicon TSV for word attacks");
  eval->add_option("--out", o.out, "report path");

  auto* prov = app.add_subcommand("provenance", "check which providers' data was used in training");
  add_model(prov);
  prov->add_option("--corpus", o.corpus, "per-provider texts");
  prov->add_option("--max-texts", o.max_texts, "texts per provider");
  prov->add_option("--out", o.out, "report path");

  auto* base = app.add_subcommand("baseline", "BM25 source attribution");
  base->add_option("--corpus", o.corpus, "training corpus");
  base->add_option("--text", o.text, "query text file");
  base->add_option("--k", o.k_list, "top-k");
  base->add_option("--out", o.out, "index JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synthbench(o);
    if (reg->parsed()) return cmd_registry(o);
    if (mark->parsed()) return cmd_mark(o);
    if (vocab->parsed()) return cmd_vocab(o);
    if (tr->parsed()) return cmd_train(o);
    if (gen->parsed()) return cmd_generate(o);
    if (attr->parsed()) return cmd_attribute(o);
    if (att->parsed()) return cmd_attack(o);
    if (eval->parsed()) return cmd_evaluate(o);
    if (prov->parsed()) return cmd_provenance(o);
    if (base->parsed()) return cmd_baseline(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.kind() == ErrorKind::InvalidArgument) return kExitUsage;
    if (e.kind() == ErrorKind::NonFiniteLoss) return kExitInternal;
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
