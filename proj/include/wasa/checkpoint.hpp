#pragma once

// Layout: "WASACKPT" | u32 version | u64 header length | JSON header
// {config, tensors: [{name, shape, dtype: "f32", byte_offset}]} | f32
// little-endian payload in manifest order | u32 CRC32 of the payload.

#include <cstdint>
#include <filesystem>
#include <string>

#include "wasa/model.hpp"

namespace wasa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& json);

void save_checkpoint(const Parameters<float>& params, const std::filesystem::path& path);
Parameters<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace wasa
