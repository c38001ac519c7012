#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vld/tensor/parameters.hpp"

namespace vld {

// Binary tensor archive:
//   "VLDC" | u8 version (1) | u32 count |
//   per tensor: u16 name length | UTF-8 name | u8 rank | rank x u32 dims | f32 values
// All integers and floats little-endian.
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;

  bool operator==(const NamedTensor&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> to_named_tensors(const ParameterSet<float>& params);
// Copies archived values into `params`; names, order and shapes must match.
void assign_named_tensors(ParameterSet<float>& params, const std::vector<NamedTensor>& tensors);

}  // namespace vld
