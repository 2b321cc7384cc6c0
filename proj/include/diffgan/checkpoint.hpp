#pragma once

#include "diffgan/adamw.hpp"
#include "diffgan/params.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace diffgan {

/// Raised for unreadable or malformed container files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint container.
///
/// Layout (docs/formats.md):
///   8 bytes   magic "DGANCKPT"
///   8 bytes   header length H, unsigned little-endian
///   H bytes   JSON header: format_version, seed, metadata, tensor table
///             (name, shape, requires_grad, offset, nbytes), optional optimizer
///   payload   raw little-endian float32 arrays at the offsets in the table
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::uint64_t seed = 0;
  nlohmann::json metadata = nlohmann::json::object();
  ParameterSet<float> params;
  /// Optimizer moments keyed by the name of the parameter set they belong to.
  std::map<std::string, AdamWState<float>> optimizers;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace diffgan
