#pragma once

// Binary archive of named tensors.
//
// Layout (all integers little-endian):
//   bytes 0..3   magic "EXST"
//   u32          format version (1)
//   u32          tensor count
//   per tensor, in ascending name order:
//     u32        name length, then the UTF-8 name bytes
//     u32        rank, then rank × u64 dimensions
//     f64 × numel  IEEE-754 binary64 values, row-major

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "exost/tensor.hpp"

namespace exost {

inline constexpr std::uint32_t kArchiveVersion = 1;

using TensorMap = std::map<std::string, DTensor>;

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_archive(const TensorMap& tensors);
TensorMap decode_archive(std::string_view bytes);

void write_archive(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_archive(const std::filesystem::path& path);

}  // namespace exost
