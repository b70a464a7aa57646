#include "wasa/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "wasa/errors.hpp"

namespace wasa {

Vocab Vocab::build(std::span<const std::string> texts, std::size_t target_size, const WatermarkAlphabet& alphabet) {
  if (target_size < kMinSize) {
    throw Error(ErrorKind::InvalidArgument, "vocabulary size must be at least " + std::to_string(kMinSize));
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& w : words_of(text, alphabet.codepoints())) ++counts[std::move(w)];
  }
  if (counts.empty()) throw Error(ErrorKind::EmptyInput, "no words to build a vocabulary from");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> words(special::kNames, special::kNames + special::kCount);
  const std::size_t keep = std::min(ranked.size(), target_size - special::kCount);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(ranked[i].first);
  return Vocab(std::move(words), alphabet);
}

Vocab::Vocab(std::vector<std::string> words, WatermarkAlphabet alphabet)
    : words_(std::move(words)), alphabet_(std::move(alphabet)) {
  if (words_.size() < special::kCount) throw Error(ErrorKind::InvalidArgument, "vocabulary lacks special tokens");
  for (std::size_t i = 0; i < special::kCount; ++i) {
    if (words_[i] != special::kNames[i]) throw Error(ErrorKind::InvalidArgument, "special tokens out of order");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

std::optional<TokenId> Vocab::word_id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::watermark_id(Codepoint cp) const {
  auto idx = alphabet_.index_of(cp);
  if (!idx) throw Error(ErrorKind::InvalidArgument, format_codepoint(cp) + " is not a watermark codepoint");
  return static_cast<TokenId>(word_count() + *idx);
}

TokenStream Vocab::encode(std::string_view text) const {
  TokenStream out;
  std::size_t word_start = 0;
  bool in_word = false;
  bool in_run = false;
  auto flush_word = [&](std::size_t end) {
    if (!in_word) return;
    const auto w = ascii_lower(text.substr(word_start, end - word_start));
    out.push(word_id(w).value_or(special::kUnk), TokenKind::Word);
    in_word = false;
  };
  for (const auto& d : decode_utf8(text)) {
    if (auto idx = alphabet_.index_of(d.value)) {
      flush_word(d.offset);
      if (!in_run) out.push(special::kWtm, TokenKind::Word);
      out.push(static_cast<TokenId>(word_count() + *idx), TokenKind::Watermark);
      in_run = true;
      continue;
    }
    in_run = false;
    if (is_space(d.value) || is_ascii_punct(d.value)) {
      flush_word(d.offset);
    } else if (!in_word) {
      in_word = true;
      word_start = d.offset;
    }
  }
  flush_word(text.size());
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids, bool keep_watermarks) const {
  std::string out;
  bool have_word = false;
  for (TokenId id : ids) {
    if (!is_valid(id)) throw Error(ErrorKind::InvalidId, "token id " + std::to_string(id));
    if (is_watermark(id)) {
      if (keep_watermarks) append_utf8(out, codepoint(id));
      continue;
    }
    if (id == special::kWtm || id == special::kPad || id == special::kBos) continue;
    if (have_word) out.push_back(' ');
    out += words_[static_cast<std::size_t>(id)];
    have_word = true;
  }
  return out;
}

std::string Vocab::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["words"] = words_;
  auto& cps = j["watermark_codepoints"] = nlohmann::ordered_json::array();
  for (Codepoint cp : alphabet_.codepoints()) cps.push_back(format_codepoint(cp));
  return j.dump() + "\n";
}

Vocab Vocab::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoError, std::string("vocab JSON: ") + e.what());
  }
  if (j.value("version", 0) != 1) throw Error(ErrorKind::FormatVersionMismatch, "vocab version");
  std::vector<Codepoint> cps;
  for (const auto& code : j.at("watermark_codepoints")) {
    auto cp = parse_codepoint(code.get<std::string>());
    if (!cp) throw Error(ErrorKind::InvalidArgument, "bad watermark codepoint in vocab");
    cps.push_back(*cp);
  }
  return Vocab(j.at("words").get<std::vector<std::string>>(), WatermarkAlphabet(std::move(cps)));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << to_json();
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::vector<Block> pack_blocks(std::span<const TokenStream> streams, std::size_t block_size, const Vocab& vocab) {
  if (block_size < 2) throw Error(ErrorKind::InvalidArgument, "block size must be at least 2");

  std::vector<Block> blocks;
  Block current;
  auto flush = [&] {
    if (current.ids.empty()) return;
    current.ids.resize(block_size, special::kPad);
    current.kinds.resize(block_size, TokenKind::Word);
    blocks.push_back(std::move(current));
    current = Block{};
  };
  auto put = [&](TokenId id, TokenKind kind) {
    current.ids.push_back(id);
    current.kinds.push_back(kind);
    if (current.ids.size() == block_size) flush();
  };

  for (const auto& stream : streams) {
    put(special::kBos, TokenKind::Word);
    std::size_t i = 0;
    while (i < stream.ids.size()) {
      if (stream.ids[i] == special::kWtm) {
        std::size_t run = 1;
        while (i + run < stream.ids.size() && vocab.is_watermark(stream.ids[i + run])) ++run;
        if (run > block_size) {
          throw Error(ErrorKind::RunLongerThanBlock, "run of " + std::to_string(run) + " tokens exceeds block size " +
                                                         std::to_string(block_size));
        }
        if (current.ids.size() + run > block_size) flush();
        for (std::size_t r = 0; r < run; ++r) put(stream.ids[i + r], stream.kinds[i + r]);
        i += run;
      } else {
        put(stream.ids[i], stream.kinds[i]);
        ++i;
      }
    }
  }
  flush();
  return blocks;
}

}  // namespace wasa
