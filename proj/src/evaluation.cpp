#include "wasa/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "wasa/errors.hpp"

namespace wasa {

namespace {

std::size_t ordinal(const Registry& registry, const ProviderId& provider) {
  const auto o = registry.ordinal_of(provider);
  if (!o) throw Error(ErrorKind::UnknownProvider, "provider '" + provider + "' is not registered");
  return *o;
}

GenConfig trial_config(const GenConfig& gen, const TrialSpec& spec, std::uint64_t seed) {
  GenConfig cfg = gen;
  cfg.seed = seed;
  cfg.max_new_tokens = spec.gen_tokens;
  cfg.top_k_watermarks = static_cast<int>(spec.max_k());
  cfg.beam_size = std::max(cfg.beam_size, cfg.top_k_watermarks);
  return cfg;
}

void score_outcome(TrialOutcome& outcome, const Registry& registry, const TrialSpec& spec,
                   std::span<const ScoredWatermark> candidates) {
  outcome.attributed = registry.match_generated(outcome.decoded, MatchMode::Exact).provider;
  const bool correct = outcome.attributed == outcome.truth;
  const auto& truth = registry.watermark_of(outcome.truth);
  outcome.hit_at_k.clear();
  for (std::size_t k : spec.k_list) {
    bool hit = correct;
    for (std::size_t i = 0; k > 1 && i < k && i < candidates.size(); ++i) hit = hit || candidates[i].watermark == truth;
    outcome.hit_at_k.push_back(hit);
  }
}

std::string format_ratio(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace

void TrialSpec::validate() const {
  if (trials_per_provider < 1 || prompt_chars < 1 || gen_tokens < 1 || k_list.empty()) {
    throw Error(ErrorKind::InvalidArgument, "trial counts must be at least 1");
  }
  for (std::size_t k : k_list) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
  }
}

std::size_t TrialSpec::max_k() const { return *std::max_element(k_list.begin(), k_list.end()); }

std::uint64_t trial_seed(std::uint64_t seed, std::size_t ordinal, std::size_t index) {
  return mix_seed(seed, 0x7e57 + ordinal, index);
}

std::vector<Trial> build_trials(const MarkedCorpus& marked, const Registry& registry, const TrialSpec& spec) {
  spec.validate();
  const auto& alphabet = registry.alphabet();
  std::unordered_map<std::string, std::size_t> corpus_of;
  for (std::size_t c = 0; c < marked.corpora.size(); ++c) corpus_of[marked.corpora[c].provider] = c;

  std::map<ProviderId, std::vector<Trial>> per_provider;
  std::map<std::pair<std::size_t, std::string>, std::vector<Sentence>> segmented;
  for (const auto& record : marked.manifest) {
    auto& list = per_provider[record.provider];
    if (list.size() >= spec.trials_per_provider) continue;
    const auto c = corpus_of.find(record.provider);
    if (c == corpus_of.end()) continue;
    const auto& corpus = marked.corpora[c->second];
    const auto doc = std::find_if(corpus.documents.begin(), corpus.documents.end(),
                                  [&](const Document& d) { return d.doc_id == record.doc_id; });
    if (doc == corpus.documents.end()) continue;
    auto key = std::make_pair(c->second, record.doc_id);
    auto it = segmented.find(key);
    if (it == segmented.end()) {
      it = segmented.emplace(key, segment_sentences(strip_watermarks(doc->text, alphabet).clean)).first;
    }
    if (record.sentence_index >= it->second.size()) continue;
    const auto cps = decode_utf8(it->second[record.sentence_index].text);
    if (cps.size() < spec.prompt_chars) continue;
    const auto& sentence = it->second[record.sentence_index].text;
    const std::size_t end = spec.prompt_chars < cps.size() ? cps[spec.prompt_chars].offset : sentence.size();
    list.push_back({record.provider, sentence.substr(0, end), list.size()});
  }

  std::vector<Trial> trials;
  for (const auto& corpus : marked.corpora) {
    ordinal(registry, corpus.provider);
    const auto& list = per_provider[corpus.provider];
    if (list.size() < spec.trials_per_provider) {
      throw Error(ErrorKind::InsufficientData, "provider '" + corpus.provider + "' has " +
                                                   std::to_string(list.size()) + " qualifying sentences, " +
                                                   std::to_string(spec.trials_per_provider - list.size()) + " short");
    }
    trials.insert(trials.end(), list.begin(), list.end());
  }
  return trials;
}

double attribution_accuracy(double matches, double trials) { return trials > 0 ? matches / trials : 0.0; }

AttributionReport summarize(std::span<const ProviderId> providers, std::span<const std::size_t> k_list,
                            std::span<const TrialOutcome> outcomes) {
  AttributionReport report;
  report.k_list.assign(k_list.begin(), k_list.end());
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& p : providers) {
    index[p] = report.providers.size();
    ProviderReport r;
    r.matches.assign(k_list.size(), 0);
    report.providers.emplace_back(p, std::move(r));
  }
  std::vector<std::size_t> total(k_list.size(), 0);
  std::size_t natural_matches = 0, forced_matches = 0;
  for (const auto& o : outcomes) {
    const auto it = index.find(o.truth);
    if (it == index.end()) throw Error(ErrorKind::UnknownProvider, "outcome for unlisted provider '" + o.truth + "'");
    auto& r = report.providers[it->second].second;
    ++r.n_trials;
    ++report.n_trials;
    const bool correct = o.attributed == o.truth;
    (o.forced ? r.n_forced : r.n_natural)++;
    (o.forced ? report.n_forced : report.n_natural)++;
    if (correct) (o.forced ? r.forced_matches : r.natural_matches)++;
    if (correct) (o.forced ? forced_matches : natural_matches)++;
    for (std::size_t j = 0; j < k_list.size(); ++j) {
      if (o.hit_at_k.at(j)) {
        ++r.matches[j];
        ++total[j];
      }
    }
    if (o.attributed && !correct) ++r.misclassified;
    if (!o.attributed) ++r.incorrect_watermark;
    if (o.attributed) {
      const auto a = index.find(*o.attributed);
      if (a != index.end()) ++report.providers[a->second].second.attributed_to;
    }
  }

  std::size_t active = 0;
  for (auto& [name, r] : report.providers) {
    for (std::size_t j = 0; j < k_list.size(); ++j) {
      r.accuracy.push_back(attribution_accuracy(static_cast<double>(r.matches[j]), static_cast<double>(r.n_trials)));
    }
    if (r.n_trials == 0) continue;
    ++active;
    const auto correct = static_cast<double>(r.natural_matches + r.forced_matches);
    r.precision = r.attributed_to ? correct / static_cast<double>(r.attributed_to) : 0.0;
    r.recall = correct / static_cast<double>(r.n_trials);
    report.macro_precision += r.precision;
    report.macro_recall += r.recall;
  }
  if (active) {
    report.macro_precision /= static_cast<double>(active);
    report.macro_recall /= static_cast<double>(active);
  }
  const double pr = report.macro_precision + report.macro_recall;
  report.macro_f1 = pr > 0 ? 2.0 * report.macro_precision * report.macro_recall / pr : 0.0;
  for (std::size_t j = 0; j < k_list.size(); ++j) {
    report.accuracy.push_back(
        attribution_accuracy(static_cast<double>(total[j]), static_cast<double>(report.n_trials)));
  }
  report.natural_accuracy =
      attribution_accuracy(static_cast<double>(natural_matches), static_cast<double>(report.n_natural));
  report.forced_accuracy =
      attribution_accuracy(static_cast<double>(forced_matches), static_cast<double>(report.n_forced));
  return report;
}

std::string AttributionReport::to_json() const {
  // Ratios are fixed-precision strings so reports are stable byte for byte.
  auto per_k = [&](const auto& values, auto convert) {
    nlohmann::ordered_json j;
    for (std::size_t i = 0; i < k_list.size(); ++i) j[std::to_string(k_list[i])] = convert(values[i]);
    return j;
  };
  auto ratio = [](double x) { return nlohmann::ordered_json::parse(format_ratio(x)); };
  auto count = [](std::size_t x) { return nlohmann::ordered_json(x); };

  nlohmann::ordered_json j;
  auto& overall = j["overall"];
  overall["n_trials"] = n_trials;
  overall["n_natural"] = n_natural;
  overall["n_forced"] = n_forced;
  overall["accuracy"] = per_k(accuracy, ratio);
  overall["natural_accuracy"] = ratio(natural_accuracy);
  overall["forced_accuracy"] = ratio(forced_accuracy);
  overall["macro_precision"] = ratio(macro_precision);
  overall["macro_recall"] = ratio(macro_recall);
  overall["macro_f1"] = ratio(macro_f1);
  auto& per = j["providers"] = nlohmann::ordered_json::object();
  for (const auto& [name, r] : providers) {
    nlohmann::ordered_json p;
    p["n_trials"] = r.n_trials;
    p["n_watermarked_naturally"] = r.n_natural;
    p["n_forced"] = r.n_forced;
    p["matches"] = per_k(r.matches, count);
    p["accuracy"] = per_k(r.accuracy, ratio);
    p["misclassified"] = r.misclassified;
    p["incorrect_watermark"] = r.incorrect_watermark;
    p["precision"] = ratio(r.precision);
    p["recall"] = ratio(r.recall);
    per[name] = std::move(p);
  }
  return j.dump(2) + "\n";
}

template <typename Scalar>
TrialOutcome attribute_trial(const Parameters<Scalar>& params, const Vocab& vocab, const Registry& registry,
                             const Trial& trial, const GenConfig& gen, const TrialSpec& spec) {
  const auto cfg = trial_config(gen, spec, trial_seed(gen.seed, ordinal(registry, trial.provider), trial.index));
  const auto out = generate(params, vocab, registry.length(), trial.prompt, cfg);
  TrialOutcome outcome;
  outcome.truth = trial.provider;
  outcome.text = out.text;
  std::vector<ScoredWatermark> candidates;
  if (!out.watermarks.empty()) {
    for (const auto& w : out.watermarks) outcome.decoded.push_back(w.watermark);
    candidates = out.candidates.front();
  } else if (spec.enforce) {
    candidates = enforce_watermark(params, vocab, registry.length(), out.text, cfg.beam_size, cfg.top_k_watermarks,
                                   ContextPolicy::KeepTail);
    outcome.decoded.push_back(candidates.front().watermark);
    outcome.forced = true;
  }
  score_outcome(outcome, registry, spec, candidates);
  return outcome;
}

template <typename Scalar>
AttributionReport run_attribution(const Parameters<Scalar>& params, const Vocab& vocab, const Registry& registry,
                                  std::span<const Trial> trials, const GenConfig& gen, const TrialSpec& spec,
                                  std::vector<TrialOutcome>* outcomes) {
  spec.validate();
  std::vector<TrialOutcome> results;
  for (const auto& t : trials) results.push_back(attribute_trial(params, vocab, registry, t, gen, spec));
  auto report = summarize(registry.providers(), spec.k_list, results);
  if (outcomes) *outcomes = std::move(results);
  return report;
}

template <typename Scalar>
std::map<ProviderId, ProvenanceResult> provenance_check(const Parameters<Scalar>& params, const Vocab& vocab,
                                                        const Registry& registry,
                                                        const std::map<ProviderId, std::vector<std::string>>& texts,
                                                        std::size_t max_texts, int beam_size) {
  std::map<ProviderId, ProvenanceResult> out;
  for (const auto& [provider, list] : texts) {
    const auto& own = registry.watermark_of(provider);
    auto& result = out[provider];
    for (std::size_t i = 0; i < list.size() && i < max_texts; ++i) {
      const auto beams =
          enforce_watermark(params, vocab, registry.length(), list[i], beam_size, 1, ContextPolicy::KeepTail);
      ++result.n_texts;
      if (beams.front().watermark == own) ++result.n_match;
    }
    result.in_training = result.n_match > 0;
  }
  return out;
}

template <typename Scalar>
std::vector<SweepRow> robustness_sweep(const Parameters<Scalar>& params, const Vocab& vocab, const Registry& registry,
                                       std::span<const Trial> trials, std::span<const AttackSpec> attacks,
                                       const Lexicon* lexicon, const GenConfig& gen, const TrialSpec& spec) {
  spec.validate();
  const auto& alphabet = registry.alphabet();
  std::vector<SweepRow> rows;
  for (const auto& attack : attacks) {
    attack.validate();
    std::vector<TrialOutcome> outcomes;
    for (const auto& trial : trials) {
      const std::size_t o = ordinal(registry, trial.provider);
      AttackSpec local = attack;
      local.seed = mix_seed(attack.seed, o, trial.index);
      if (attack.target == AttackTarget::Prompt) {
        Trial attacked = trial;
        attacked.prompt = apply_attack(trial.prompt, alphabet, local, lexicon);
        outcomes.push_back(attribute_trial(params, vocab, registry, attacked, gen, spec));
        continue;
      }
      const auto cfg = trial_config(gen, spec, trial_seed(gen.seed, o, trial.index));
      const auto out = generate(params, vocab, registry.length(), trial.prompt, cfg);
      TrialOutcome outcome;
      outcome.truth = trial.provider;
      outcome.text = apply_attack(out.text, alphabet, local, lexicon);
      const auto beams = regenerate_defense(params, vocab, registry.length(), outcome.text, cfg.beam_size,
                                            cfg.top_k_watermarks, ContextPolicy::KeepTail);
      outcome.decoded.push_back(beams.front().watermark);
      outcome.forced = out.watermarks.empty();
      score_outcome(outcome, registry, spec, beams);
      outcomes.push_back(std::move(outcome));
    }
    rows.push_back({attack, summarize(registry.providers(), spec.k_list, outcomes)});
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "attack,mode,strength,k,accuracy\n";
  for (const auto& row : rows) {
    const auto j = nlohmann::json::parse(row.attack.to_json());
    std::string mode = j.at("mode").get<std::string>();
    if (j.contains("placement")) mode += "-" + j["placement"].get<std::string>();
    const std::string attack = j.at("target").get<std::string>() + "/" + j.at("family").get<std::string>();
    for (std::size_t i = 0; i < row.report.k_list.size(); ++i) {
      out += attack + "," + mode + "," + format_ratio(row.attack.strength) + "," +
             std::to_string(row.report.k_list[i]) + "," + format_ratio(row.report.accuracy[i]) + "\n";
    }
  }
  return out;
}

double distinct_n(std::span<const std::string> texts, std::size_t n, const WatermarkAlphabet& alphabet) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be at least 1");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& text : texts) {
    const auto words = words_of(strip_watermarks(text, alphabet).clean, alphabet.codepoints());
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      unique.emplace(words.begin() + static_cast<std::ptrdiff_t>(i),
                     words.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  return total ? static_cast<double>(unique.size()) / static_cast<double>(total) : 0.0;
}

#define WASA_INSTANTIATE_EVALUATION(Scalar)                                                                          \
  template TrialOutcome attribute_trial<Scalar>(const Parameters<Scalar>&, const Vocab&, const Registry&,            \
                                                const Trial&, const GenConfig&, const TrialSpec&);                   \
  template AttributionReport run_attribution<Scalar>(const Parameters<Scalar>&, const Vocab&, const Registry&,       \
                                                     std::span<const Trial>, const GenConfig&, const TrialSpec&,     \
                                                     std::vector<TrialOutcome>*);                                    \
  template std::map<ProviderId, ProvenanceResult> provenance_check<Scalar>(                                          \
      const Parameters<Scalar>&, const Vocab&, const Registry&, const std::map<ProviderId, std::vector<std::string>>&, \
      std::size_t, int);                                                                                             \
  template std::vector<SweepRow> robustness_sweep<Scalar>(const Parameters<Scalar>&, const Vocab&, const Registry&,  \
                                                          std::span<const Trial>, std::span<const AttackSpec>,       \
                                                          const Lexicon*, const GenConfig&, const TrialSpec&);

WASA_INSTANTIATE_EVALUATION(float)
WASA_INSTANTIATE_EVALUATION(double)

#undef WASA_INSTANTIATE_EVALUATION

}  // namespace wasa
