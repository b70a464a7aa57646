#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "wasa/marking.hpp"

namespace wasa {

/// A directory of `<provider>/<doc_id>.txt` files, or a JSONL file of
/// {"provider", "doc_id", "text"} lines. Providers keep directory (sorted) or
/// first-appearance order.
std::vector<ProviderCorpus> read_corpus(const std::filesystem::path& path);

/// Writes the same layout read_corpus accepts; `.jsonl` paths produce JSONL.
void write_corpus(const std::filesystem::path& path, std::span<const ProviderCorpus> corpora);

/// One JSON object per line; watermarks as U+XXXX codes.
void write_manifest(const std::filesystem::path& path, std::span<const MarkRecord> manifest);
std::vector<MarkRecord> read_manifest(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace wasa
