#pragma once

// Binary episode container: fixed header (magic, version, geometry, world
// constants, initial state) followed by fixed-stride frame records of
// 64-bit little-endian reals. Round-trips are lossless; headers are checked
// before any payload is trusted.

#include "vtp/synthworld.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace vtp::synth {

inline constexpr char kEpisodeMagic[8] = {'V', 'T', 'E', 'P', 'I', 'S', 'O', 'D'};
inline constexpr uint32_t kEpisodeVersion = 1;

void write_episode(const std::filesystem::path& path, const Episode& ep);
Episode read_episode(const std::filesystem::path& path);

struct ManifestRow {
  std::string filename;
  uint64_t seed;
  Index length;
  bool success;
};

// One line per episode: filename, seed, length, success.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows,
                    uint64_t config_digest);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// Writes every episode plus the manifest into a directory; returns rows.
std::vector<ManifestRow> write_dataset(const std::filesystem::path& dir,
                                       const std::vector<Episode>& episodes,
                                       uint64_t config_digest);
std::vector<Episode> read_dataset(const std::filesystem::path& dir);

}  // namespace vtp::synth
