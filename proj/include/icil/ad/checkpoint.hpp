#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "icil/ad/params.hpp"

namespace icil::ad {

struct NamedArray {
  std::string name;
  Array value;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

// On-disk parameter bundle. Layout (little-endian):
//   "ICILCKPT" | u32 format-version | u64 metadata-bytes | metadata (UTF-8 JSON)
//   | u64 count | count x { u32 name-bytes | name | u32 rank | rank x u64 extent }
//   | count x row-major float64 payloads
// The header lists every name and shape before any payload.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string metadata;
  std::vector<NamedArray> arrays;

  void append(const ParameterStore& store);
  // Copies every array whose name exists in `store` into it; returns how many.
  std::size_t restore(ParameterStore& store) const;
  const Array& find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace icil::ad
