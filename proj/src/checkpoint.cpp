#include "skate/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace skate {

bool save_checkpoint(const std::string& path, const std::vector<ParamBlock>& blocks,
                     const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;

  nlohmann::json header = meta;
  auto& shapes = header["blocks"];
  shapes = nlohmann::json::array();
  for (const auto& b : blocks)
    shapes.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});

  std::string meta_str = header.dump();
  out.write("SKCP", 4);
  uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  uint64_t meta_len = meta_str.size();
  out.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_len));
  for (const auto& b : blocks)
    out.write(reinterpret_cast<const char*>(b.value),
              static_cast<std::streamsize>(b.size() * sizeof(double)));
  return static_cast<bool>(out);
}

bool load_checkpoint(const std::string& path, const std::vector<ParamBlock>& blocks,
                     nlohmann::json* meta_out, std::string* error) {
  auto fail = [&](const std::string& msg) {
    if (error) *error = msg;
    return false;
  };
  std::ifstream in(path, std::ios::binary);
  if (!in) return fail("cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "SKCP", 4) != 0) return fail("bad magic");
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion) return fail("unsupported checkpoint version");
  uint64_t meta_len = 0;
  in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));

  nlohmann::json header = nlohmann::json::parse(meta_str, nullptr, false);
  if (header.is_discarded()) return fail("corrupt checkpoint metadata");
  const auto& shapes = header["blocks"];
  if (shapes.size() != blocks.size()) return fail("block count mismatch");
  for (size_t i = 0; i < blocks.size(); ++i) {
    if (shapes[i]["rows"].get<int>() != blocks[i].rows ||
        shapes[i]["cols"].get<int>() != blocks[i].cols)
      return fail("shape mismatch at block " + blocks[i].name);
  }
  for (const auto& b : blocks)
    in.read(reinterpret_cast<char*>(b.value),
            static_cast<std::streamsize>(b.size() * sizeof(double)));
  if (!in) return fail("truncated checkpoint");
  if (meta_out) *meta_out = header;
  return true;
}

}  // namespace skate
