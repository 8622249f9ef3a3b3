#pragma once

// Per-channel normalization statistics over a training set. Standard
// deviations are floored at 1e-6 so constant channels stay well-behaved;
// normalize and denormalize are exact inverses within 1e-12.

#include "vtp/tensor.hpp"

#include <map>
#include <string>

namespace vtp::train {

struct ChannelStats {
  ad::Array mean;
  ad::Array std;

  ad::Array normalize(const ad::Array& row) const { return (row - mean) / std; }
  ad::Array denormalize(const ad::Array& row) const { return row * std + mean; }
};

struct NormalizationStats {
  ChannelStats proprio;        // [P]
  ChannelStats tactile_raw;    // [C]
  ChannelStats tactile_delta;  // [C]
  ChannelStats action;         // [P]

  static constexpr double kStdFloor = 1e-6;

  // Normalize a [rows, 2C] tactile window (raw half, delta half).
  ad::Array normalize_tactile_window(const ad::Array& window, ad::Index rows) const;
  // Normalize/denormalize [rows, P] matrices row by row.
  ad::Array normalize_rows(const ChannelStats& s, const ad::Array& mat, ad::Index rows) const;
  ad::Array denormalize_rows(const ChannelStats& s, const ad::Array& mat, ad::Index rows) const;

  // Round-trips through named blobs for the checkpoint container.
  std::map<std::string, ad::Array> to_blobs() const;
  static NormalizationStats from_blobs(const std::map<std::string, ad::Array>& blobs);
};

// Accumulates running mean/std per channel.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(ad::Index dim)
      : sum_(ad::Array::Zero(dim)), sum_sq_(ad::Array::Zero(dim)) {}

  void add(const ad::Array& row);
  ChannelStats finish() const;

 private:
  ad::Array sum_, sum_sq_;
  long count_ = 0;
};

}  // namespace vtp::train
