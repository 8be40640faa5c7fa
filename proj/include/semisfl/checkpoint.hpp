#pragma once

// Checkpoint layout:
//   bytes 0..7    ASCII magic "SSFLCKPT"
//   bytes 8..15   manifest length L, uint64 little-endian
//   next L bytes  JSON manifest {"format":1,"tensors":[{"name":str,"shape":[...]}, ...]}
//   remainder     every tensor's values in manifest order, IEEE-754 binary64 little-endian

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "semisfl/tensor.hpp"

namespace semisfl {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[] = "SSFLCKPT";

inline std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) manifest["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape}});
  const std::string text = manifest.dump();

  std::string out(kCheckpointMagic, 8);
  detail::put_u64(out, text.size());
  out += text;
  for (const auto& t : tensors)
    for (double v : t.tensor.values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic, 8) != 0)
    throw ContractError("checkpoint: bad magic");
  const std::uint64_t len = detail::get_u64(bytes, 8);
  if (16 + len > bytes.size()) throw ContractError("checkpoint: truncated manifest");
  const auto manifest = nlohmann::json::parse(bytes.substr(16, len));
  if (manifest.value("format", 0) != 1) throw ContractError("checkpoint: unsupported format");

  std::vector<NamedTensor> out;
  std::size_t pos = 16 + len;
  for (const auto& entry : manifest.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t n = shape_numel(shape);
    if (pos + 8 * n > bytes.size()) throw ContractError("checkpoint: truncated payload");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i, pos += 8) values[i] = std::bit_cast<double>(detail::get_u64(bytes, pos));
    out.push_back({entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
  }
  if (pos != bytes.size()) throw ContractError("checkpoint: trailing bytes");
  return out;
}

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace semisfl
