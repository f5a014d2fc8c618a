#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "skate/nets.hpp"

namespace skate {

// Checkpoint file: magic "SKCP", u32 format version, u64 meta length, meta
// JSON (block names and shapes plus caller metadata), then raw little-endian
// doubles in block order. Round-trips are bit exact.
constexpr uint32_t kCheckpointVersion = 1;

bool save_checkpoint(const std::string& path, const std::vector<ParamBlock>& blocks,
                     const nlohmann::json& meta);

// Blocks must already be allocated with matching shapes.
bool load_checkpoint(const std::string& path, const std::vector<ParamBlock>& blocks,
                     nlohmann::json* meta_out = nullptr, std::string* error = nullptr);

}  // namespace skate
