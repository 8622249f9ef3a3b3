#pragma once

// Versioned binary parameter container: magic, version, config digests,
// then named blobs (name, shape, raw 64-bit little-endian values).
// Save/load round-trips are bit-exact.

#include "vtp/nn.hpp"
#include "vtp/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace vtp::policy {

inline constexpr char kCheckpointMagic[8] = {'V', 'T', 'P', 'C', 'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointBlob {
  ad::Shape shape;
  ad::Array values;
};

struct Checkpoint {
  uint64_t config_digest = 0;
  uint64_t model_digest = 0;
  std::map<std::string, CheckpointBlob> blobs;

  std::map<std::string, ad::Array> arrays() const;
};

void save_checkpoint(const std::filesystem::path& path, const nn::ParamStore& params,
                     const std::map<std::string, ad::Array>& extra_blobs, uint64_t config_digest,
                     uint64_t model_digest);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies matching blobs into the store; throws if any parameter is missing
// or has a different shape.
void restore_params(nn::ParamStore& params, const Checkpoint& ckpt);

}  // namespace vtp::policy
