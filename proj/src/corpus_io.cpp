#include "wasa/corpus_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wasa/errors.hpp"

namespace fs = std::filesystem;

namespace wasa {

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

std::vector<ProviderCorpus> read_corpus(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::IoError, "corpus not found: " + path.string());
  std::vector<ProviderCorpus> corpora;
  if (fs::is_directory(path)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      ProviderCorpus corpus{dir.filename().string(), {}};
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) corpus.documents.push_back({f.stem().string(), read_text_file(f)});
      corpora.push_back(std::move(corpus));
    }
  } else {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        const auto provider = j.at("provider").get<std::string>();
        auto it = std::find_if(corpora.begin(), corpora.end(),
                               [&](const ProviderCorpus& c) { return c.provider == provider; });
        if (it == corpora.end()) it = corpora.insert(corpora.end(), ProviderCorpus{provider, {}});
        std::string doc_id = j.contains("doc_id") ? j["doc_id"].get<std::string>()
                                                  : std::to_string(it->documents.size());
        it->documents.push_back({std::move(doc_id), j.at("text").get<std::string>()});
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  if (corpora.empty()) throw Error(ErrorKind::EmptyCorpus, "no providers in " + path.string());
  return corpora;
}

void write_corpus(const fs::path& path, std::span<const ProviderCorpus> corpora) {
  if (path.extension() == ".jsonl") {
    std::string out;
    for (const auto& c : corpora) {
      for (const auto& d : c.documents) {
        nlohmann::ordered_json j;
        j["provider"] = c.provider;
        j["doc_id"] = d.doc_id;
        j["text"] = d.text;
        out += j.dump() + "\n";
      }
    }
    write_text_file(path, out);
    return;
  }
  for (const auto& c : corpora) {
    for (const auto& d : c.documents) write_text_file(path / c.provider / (d.doc_id + ".txt"), d.text);
  }
}

void write_manifest(const fs::path& path, std::span<const MarkRecord> manifest) {
  std::string out;
  for (const auto& r : manifest) {
    nlohmann::ordered_json j;
    j["provider"] = r.provider;
    j["doc_id"] = r.doc_id;
    j["sentence_index"] = r.sentence_index;
    j["char_offset"] = r.char_offset;
    j["watermark"] = r.watermark.to_codes();
    out += j.dump() + "\n";
  }
  write_text_file(path, out);
}

std::vector<MarkRecord> read_manifest(const fs::path& path) {
  std::vector<MarkRecord> records;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back({j.at("provider").get<std::string>(), j.at("doc_id").get<std::string>(),
                         j.at("sentence_index").get<std::size_t>(), j.at("char_offset").get<std::size_t>(),
                         Watermark::from_codes(j.at("watermark").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
    }
  }
  return records;
}

}  // namespace wasa
