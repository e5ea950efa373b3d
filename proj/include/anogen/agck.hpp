#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "anogen/nn/tensor.hpp"

namespace anogen {

// AGCK container, all integers little-endian:
//
//   "AGCK"                      4 bytes magic
//   version                     u32 (currently 1)
//   config entry count          u32
//     entry length              u32, then that many UTF-8 bytes "key=value"
//   tensor count                u32
//     name length               u16, then UTF-8 name
//     dtype                     u8 (0 = f32)
//     rank                      u8
//     dims                      u32[rank]
//     payload                   f32[prod(dims)]
inline constexpr std::uint32_t kAgckVersion = 1;

struct AgckFile {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;

  std::optional<std::string> get(const std::string& key) const;
  // Throws FormatError naming `key` when absent.
  const std::string& require(const std::string& key) const;
  const nn::Tensor<float>* find_tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_agck(const AgckFile& file);
AgckFile decode_agck(const std::vector<std::uint8_t>& bytes);

// write_agck goes through a temporary file and a rename.
void write_agck(const AgckFile& file, const std::filesystem::path& path);
AgckFile read_agck(const std::filesystem::path& path);

}  // namespace anogen
