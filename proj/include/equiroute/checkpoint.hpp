#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace equiroute {

/// Serialized parameters of one trained component.
///
/// On disk: the 8 bytes "EQRCKPT1", a little-endian uint64 header length, the
/// header as compact JSON (always carrying "kind"), a little-endian uint64 value
/// count, then the values as little-endian IEEE-754 doubles.
struct Checkpoint {
  std::string kind;
  nlohmann::json header = nlohmann::json::object();
  std::vector<double> values;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint read_checkpoint(const std::filesystem::path& file);

}  // namespace equiroute
