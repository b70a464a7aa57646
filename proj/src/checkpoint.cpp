#include "wasa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "wasa/errors.hpp"

namespace wasa {

namespace {

constexpr char kMagic[8] = {'W', 'A', 'S', 'A', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorKind::IoError, "truncated checkpoint");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_words"] = c.vocab_words;
  j["vocab_watermark"] = c.vocab_watermark;
  j["embed"] = c.embed;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["block"] = c.block;
  j["frozen_layers"] = c.frozen_layers;
  j["seed"] = c.seed;
  return j;
}

ModelConfig config_of(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_words = j.at("vocab_words").get<int>();
  c.vocab_watermark = j.at("vocab_watermark").get<int>();
  c.embed = j.at("embed").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.block = j.at("block").get<int>();
  c.frozen_layers = j.value("frozen_layers", 0);
  c.seed = j.value("seed", std::uint64_t{0});
  return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig config_from_json(const std::string& json) { return config_of(nlohmann::json::parse(json)); }

void save_checkpoint(const Parameters<float>& params, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["config"] = config_json(params.config);
  auto& tensors = header["tensors"] = nlohmann::ordered_json::array();
  std::string payload;
  params.visit([&](const std::string& name, const Matrix<float>& m) {
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"dtype", "f32"}, {"byte_offset", payload.size()}});
    payload.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
  });
  const std::string header_text = header.dump();

  std::string file(kMagic, sizeof kMagic);
  put<std::uint32_t>(file, kCheckpointVersion);
  put<std::uint64_t>(file, header_text.size());
  file += header_text;
  file += payload;
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
  put<std::uint32_t>(file, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

Parameters<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (file.size() < sizeof kMagic || std::memcmp(file.data(), kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorKind::IoError, path.string() + " is not a checkpoint");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(file, pos);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::FormatVersionMismatch, "checkpoint version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(file, pos);
  if (pos + header_len + sizeof(std::uint32_t) > file.size()) throw Error(ErrorKind::IoError, "truncated checkpoint");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(file.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoError, std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;
  const std::size_t payload_len = file.size() - pos - sizeof(std::uint32_t);
  const char* payload = file.data() + pos;
  std::size_t crc_pos = pos + payload_len;
  const auto stored_crc = take<std::uint32_t>(file, crc_pos);
  const auto crc =
      static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(payload), static_cast<uInt>(payload_len)));
  if (crc != stored_crc) throw Error(ErrorKind::ChecksumMismatch, path.string());

  auto params = Parameters<float>::zeros(config_of(header.at("config")));
  const auto& tensors = header.at("tensors");
  std::size_t index = 0;
  params.visit([&](const std::string& name, Matrix<float>& m) {
    if (index >= tensors.size()) throw Error(ErrorKind::ShapeMismatch, "missing tensor " + name);
    const auto& t = tensors[index++];
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    const auto offset = t.at("byte_offset").get<std::size_t>();
    if (t.at("name").get<std::string>() != name || shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "tensor " + name + " does not match the config");
    }
    const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(float);
    if (offset + bytes > payload_len) throw Error(ErrorKind::IoError, "tensor " + name + " out of range");
    std::memcpy(m.data(), payload + offset, bytes);
  });
  return params;
}

}  // namespace wasa
