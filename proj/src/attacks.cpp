#include "wasa/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "wasa/errors.hpp"
#include "wasa/marking.hpp"

namespace wasa {

namespace {

std::size_t edit_count(double strength, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(strength * static_cast<double>(n) - 1e-9));
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, population));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::string> split_chunks(std::string_view text) {
  std::vector<std::string> chunks;
  std::istringstream in{std::string(text)};
  std::string chunk;
  while (in >> chunk) chunks.push_back(chunk);
  return chunks;
}

std::string join_chunks(const std::vector<std::string>& chunks) {
  std::string out;
  for (const auto& c : chunks) {
    if (!out.empty()) out.push_back(' ');
    out += c;
  }
  return out;
}

std::string runs_of(std::string_view chunk, const WatermarkAlphabet& alphabet) {
  std::string out;
  for (const auto& run : strip_watermarks(chunk, alphabet).runs) out += encode_utf8(run.codepoints);
  return out;
}

// Removes run-only chunks by attaching them to the preceding word.
std::vector<std::string> attach_orphan_runs(std::vector<std::string> chunks, const WatermarkAlphabet& alphabet) {
  std::vector<std::string> out;
  for (auto& c : chunks) {
    if (c.empty()) continue;
    if (strip_watermarks(c, alphabet).clean.empty() && !out.empty()) {
      out.back() += c;
    } else {
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::string normalize_word(std::string_view chunk) {
  std::size_t b = 0, e = chunk.size();
  while (b < e && is_ascii_punct(static_cast<unsigned char>(chunk[b]))) ++b;
  while (e > b && is_ascii_punct(static_cast<unsigned char>(chunk[e - 1]))) --e;
  return ascii_lower(chunk.substr(b, e - b));
}

const std::vector<std::string>& fill_source(const Lexicon& lexicon, std::vector<std::string>& scratch) {
  if (!lexicon.fill_words.empty()) return lexicon.fill_words;
  for (const auto& [word, syns] : lexicon.synonyms) scratch.push_back(word);
  return scratch;
}

AttackMode parse_mode(const std::string& mode, const std::string& placement) {
  if (mode == "remove") return AttackMode::Remove;
  if (mode == "modify") return AttackMode::Modify;
  if (mode == "insert") return placement == "localized" ? AttackMode::InsertLocalized : AttackMode::Insert;
  if (mode == "localized") return AttackMode::InsertLocalized;
  if (mode == "delete") return AttackMode::Delete;
  if (mode == "synonym") return AttackMode::Synonym;
  if (mode == "swap") return AttackMode::Swap;
  throw Error(ErrorKind::InvalidArgument, "unknown attack mode '" + mode + "'");
}

std::string mode_name(AttackMode mode) {
  switch (mode) {
    case AttackMode::Remove: return "remove";
    case AttackMode::Modify: return "modify";
    case AttackMode::Insert: return "insert";
    case AttackMode::InsertLocalized: return "localized";
    case AttackMode::Delete: return "delete";
    case AttackMode::Synonym: return "synonym";
    case AttackMode::Swap: return "swap";
  }
  return "?";
}

std::string family_name(AttackFamily f) {
  switch (f) {
    case AttackFamily::Watermark: return "watermark";
    case AttackFamily::Word: return "word";
    case AttackFamily::Char: return "char";
  }
  return "?";
}

}  // namespace

Lexicon Lexicon::parse(std::string_view text) {
  Lexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    const std::string word = ascii_lower(line.substr(0, tab));
    std::istringstream syns(line.substr(tab + 1));
    std::string s;
    while (std::getline(syns, s, ',')) {
      if (!s.empty()) lex.synonyms[word].push_back(s);
    }
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read lexicon " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Lexicon::serialize() const {
  std::string out;
  for (const auto& [word, syns] : synonyms) {
    out += word;
    out.push_back('\t');
    for (std::size_t i = 0; i < syns.size(); ++i) {
      if (i) out.push_back(',');
      out += syns[i];
    }
    out.push_back('\n');
  }
  return out;
}

void AttackSpec::validate() const {
  if (!(strength >= 0.0 && strength <= 1.0)) throw Error(ErrorKind::InvalidArgument, "strength must be in [0, 1]");
  const bool ok = (family == AttackFamily::Watermark && (mode == AttackMode::Remove || mode == AttackMode::Modify)) ||
                  (family == AttackFamily::Word && (mode == AttackMode::Insert || mode == AttackMode::InsertLocalized ||
                                                    mode == AttackMode::Delete || mode == AttackMode::Synonym)) ||
                  (family == AttackFamily::Char &&
                   (mode == AttackMode::Insert || mode == AttackMode::Delete || mode == AttackMode::Swap));
  if (!ok) throw Error(ErrorKind::InvalidArgument, "mode " + mode_name(mode) + " is not valid for " + family_name(family));
}

std::string AttackSpec::label() const {
  return std::string(target == AttackTarget::Prompt ? "prompt" : "generated") + "/" + family_name(family) + "/" +
         mode_name(mode);
}

AttackSpec AttackSpec::from_json(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("attack spec: ") + e.what());
  }
  AttackSpec spec;
  const auto target = j.value("target", std::string("generated"));
  if (target == "prompt") {
    spec.target = AttackTarget::Prompt;
  } else if (target == "generated" || target == "generated_text") {
    spec.target = AttackTarget::GeneratedText;
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown attack target '" + target + "'");
  }
  const auto family = j.value("family", std::string("watermark"));
  if (family == "watermark") {
    spec.family = AttackFamily::Watermark;
  } else if (family == "word") {
    spec.family = AttackFamily::Word;
  } else if (family == "char") {
    spec.family = AttackFamily::Char;
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown attack family '" + family + "'");
  }
  spec.mode = parse_mode(j.value("mode", std::string("remove")), j.value("placement", std::string("dispersed")));
  spec.strength = j.value("strength", 0.0);
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.validate();
  return spec;
}

std::string AttackSpec::to_json() const {
  nlohmann::ordered_json j;
  j["target"] = target == AttackTarget::Prompt ? "prompt" : "generated";
  j["family"] = family_name(family);
  j["mode"] = mode == AttackMode::InsertLocalized ? "insert" : mode_name(mode);
  if (mode == AttackMode::InsertLocalized) j["placement"] = "localized";
  j["strength"] = strength;
  j["seed"] = seed;
  return j.dump();
}

std::string attack_watermark(std::string_view text, const WatermarkAlphabet& alphabet, AttackMode mode, double rate,
                             std::uint64_t seed) {
  if (mode == AttackMode::Remove) return strip_watermarks(text, alphabet).clean;
  if (mode != AttackMode::Modify) throw Error(ErrorKind::InvalidArgument, "watermark attacks are remove or modify");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(1, alphabet.size() - 1);
  std::string out;
  for (const auto& d : decode_utf8(text)) {
    const auto idx = alphabet.index_of(d.value);
    if (!idx) {
      out.append(text.substr(d.offset, d.length));
      continue;
    }
    Codepoint cp = d.value;
    if (alphabet.size() > 1 && coin(rng) < rate) cp = alphabet.at((*idx + other(rng)) % alphabet.size());
    append_utf8(out, cp);
  }
  return out;
}

std::string attack_words(std::string_view text, const WatermarkAlphabet& alphabet, AttackMode mode, double strength,
                         const Lexicon* lexicon, std::uint64_t seed) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw Error(ErrorKind::InvalidArgument, "strength must be in [0, 1]");
  if ((mode == AttackMode::Synonym || mode == AttackMode::Insert || mode == AttackMode::InsertLocalized) && !lexicon) {
    throw Error(ErrorKind::MissingLexicon, "word " + mode_name(mode) + " attack needs a lexicon");
  }
  auto chunks = split_chunks(text);
  std::vector<std::size_t> words;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (!strip_watermarks(chunks[i], alphabet).clean.empty()) words.push_back(i);
  }
  std::mt19937_64 rng(seed);

  switch (mode) {
    case AttackMode::Delete: {
      const auto picks = sample_indices(words.size(), edit_count(strength, words.size()), rng);
      if (picks.empty()) return std::string(text);
      for (std::size_t p : picks) chunks[words[p]] = runs_of(chunks[words[p]], alphabet);
      return join_chunks(attach_orphan_runs(std::move(chunks), alphabet));
    }
    case AttackMode::Synonym: {
      std::vector<std::size_t> eligible;
      for (std::size_t w : words) {
        if (lexicon->synonyms.count(normalize_word(strip_watermarks(chunks[w], alphabet).clean))) eligible.push_back(w);
      }
      const auto picks = sample_indices(eligible.size(), edit_count(strength, words.size()), rng);
      if (picks.empty()) return std::string(text);
      for (std::size_t p : picks) {
        auto& chunk = chunks[eligible[p]];
        const auto& syns = lexicon->synonyms.at(normalize_word(strip_watermarks(chunk, alphabet).clean));
        std::uniform_int_distribution<std::size_t> pick(0, syns.size() - 1);
        chunk = syns[pick(rng)] + runs_of(chunk, alphabet);
      }
      return join_chunks(chunks);
    }
    case AttackMode::Insert:
    case AttackMode::InsertLocalized: {
      std::vector<std::string> scratch;
      const auto& fill = fill_source(*lexicon, scratch);
      if (fill.empty()) throw Error(ErrorKind::MissingLexicon, "lexicon has no words to insert");
      const std::size_t count = mode == AttackMode::InsertLocalized ? 1 : edit_count(strength, words.size());
      if (count == 0) return std::string(text);
      std::uniform_int_distribution<std::size_t> pick_word(0, fill.size() - 1);
      for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> gap(0, chunks.size());
        const std::size_t at = gap(rng);
        chunks.insert(chunks.begin() + static_cast<std::ptrdiff_t>(at), fill[pick_word(rng)]);
      }
      return join_chunks(chunks);
    }
    default:
      throw Error(ErrorKind::InvalidArgument, "word attacks are insert, delete or synonym");
  }
}

std::string attack_chars(std::string_view text, const WatermarkAlphabet& alphabet, AttackMode mode, double strength,
                         std::uint64_t seed) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw Error(ErrorKind::InvalidArgument, "strength must be in [0, 1]");
  struct Item {
    Codepoint cp;
    bool visible;
  };
  std::vector<Item> items;
  std::vector<std::size_t> visible;
  for (const auto& d : decode_utf8(text)) {
    const bool v = !alphabet.contains(d.value);
    if (v) visible.push_back(items.size());
    items.push_back({d.value, v});
  }
  const std::size_t count = edit_count(strength, visible.size());
  if (count == 0) return std::string(text);
  std::mt19937_64 rng(seed);

  switch (mode) {
    case AttackMode::Delete: {
      for (std::size_t p : sample_indices(visible.size(), count, rng)) items[visible[p]].cp = 0;
      std::erase_if(items, [](const Item& it) { return it.visible && it.cp == 0; });
      break;
    }
    case AttackMode::Swap: {
      if (visible.size() < 2) throw Error(ErrorKind::InvalidArgument, "swap needs at least two visible characters");
      std::uniform_int_distribution<std::size_t> pick(0, visible.size() - 2);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t p = pick(rng);
        std::swap(items[visible[p]].cp, items[visible[p + 1]].cp);
      }
      break;
    }
    case AttackMode::Insert: {
      std::uniform_int_distribution<int> letter(0, 25);
      for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pos(0, visible.size());
        const std::size_t p = pos(rng);
        const std::size_t at = p < visible.size() ? visible[p] : items.size();
        items.insert(items.begin() + static_cast<std::ptrdiff_t>(at), {static_cast<Codepoint>('a' + letter(rng)), true});
        visible.clear();
        for (std::size_t j = 0; j < items.size(); ++j) {
          if (items[j].visible) visible.push_back(j);
        }
      }
      break;
    }
    default:
      throw Error(ErrorKind::InvalidArgument, "character attacks are insert, delete or swap");
  }
  std::string out;
  for (const auto& it : items) append_utf8(out, it.cp);
  return out;
}

std::string apply_attack(std::string_view text, const WatermarkAlphabet& alphabet, const AttackSpec& spec,
                         const Lexicon* lexicon) {
  spec.validate();
  switch (spec.family) {
    case AttackFamily::Watermark: return attack_watermark(text, alphabet, spec.mode, spec.strength, spec.seed);
    case AttackFamily::Word: return attack_words(text, alphabet, spec.mode, spec.strength, lexicon, spec.seed);
    case AttackFamily::Char: return attack_chars(text, alphabet, spec.mode, spec.strength, spec.seed);
  }
  return std::string(text);
}

}  // namespace wasa
