#include "vtp/normalization.hpp"

#include <cmath>
#include <stdexcept>

namespace vtp::train {

void StatsAccumulator::add(const ad::Array& row) {
  if (row.size() != sum_.size()) throw ad::ShapeError("stats: row width mismatch");
  sum_ += row;
  sum_sq_ += row.square();
  ++count_;
}

ChannelStats StatsAccumulator::finish() const {
  if (count_ == 0) throw ad::NumericError("stats: no rows accumulated");
  double n = static_cast<double>(count_);
  ChannelStats s;
  s.mean = sum_ / n;
  ad::Array var = (sum_sq_ / n - s.mean.square()).max(0.0);
  s.std = var.sqrt().max(NormalizationStats::kStdFloor);
  return s;
}

ad::Array NormalizationStats::normalize_rows(const ChannelStats& s, const ad::Array& mat,
                                             ad::Index rows) const {
  ad::Index cols = mat.size() / rows;
  ad::Array out(mat.size());
  for (ad::Index r = 0; r < rows; ++r) {
    out.segment(r * cols, cols) = s.normalize(mat.segment(r * cols, cols));
  }
  return out;
}

ad::Array NormalizationStats::denormalize_rows(const ChannelStats& s, const ad::Array& mat,
                                               ad::Index rows) const {
  ad::Index cols = mat.size() / rows;
  ad::Array out(mat.size());
  for (ad::Index r = 0; r < rows; ++r) {
    out.segment(r * cols, cols) = s.denormalize(mat.segment(r * cols, cols));
  }
  return out;
}

ad::Array NormalizationStats::normalize_tactile_window(const ad::Array& window,
                                                       ad::Index rows) const {
  ad::Index c = tactile_raw.mean.size();
  if (window.size() != rows * 2 * c) throw ad::ShapeError("tactile window width mismatch");
  ad::Array out(window.size());
  for (ad::Index r = 0; r < rows; ++r) {
    out.segment(r * 2 * c, c) = tactile_raw.normalize(window.segment(r * 2 * c, c));
    out.segment(r * 2 * c + c, c) = tactile_delta.normalize(window.segment(r * 2 * c + c, c));
  }
  return out;
}

std::map<std::string, ad::Array> NormalizationStats::to_blobs() const {
  return {
      {"norm.proprio.mean", proprio.mean},       {"norm.proprio.std", proprio.std},
      {"norm.tactile_raw.mean", tactile_raw.mean},   {"norm.tactile_raw.std", tactile_raw.std},
      {"norm.tactile_delta.mean", tactile_delta.mean},
      {"norm.tactile_delta.std", tactile_delta.std},
      {"norm.action.mean", action.mean},         {"norm.action.std", action.std},
  };
}

NormalizationStats NormalizationStats::from_blobs(const std::map<std::string, ad::Array>& blobs) {
  auto need = [&](const std::string& key) -> const ad::Array& {
    auto it = blobs.find(key);
    if (it == blobs.end()) throw ad::NumericError("checkpoint missing blob " + key);
    return it->second;
  };
  NormalizationStats s;
  s.proprio = {need("norm.proprio.mean"), need("norm.proprio.std")};
  s.tactile_raw = {need("norm.tactile_raw.mean"), need("norm.tactile_raw.std")};
  s.tactile_delta = {need("norm.tactile_delta.mean"), need("norm.tactile_delta.std")};
  s.action = {need("norm.action.mean"), need("norm.action.std")};
  return s;
}

}  // namespace vtp::train
