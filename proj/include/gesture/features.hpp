// SPDX-License-Identifier: Apache-2.0
/**
 * @file features.hpp
 * @brief Hand segmentation pipeline, shape feature vectors and the
 *        per-gesture feature store used for nearest-match recognition.
 */
#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "gesture/annotation.hpp"
#include "gesture/imaging.hpp"

namespace gesture::models {

/// 7 Hu moments, bounding-box aspect ratio (w / h), fill ratio (area / box area).
inline constexpr std::size_t kFeatureDim = 9;
using FeatureVector = std::array<double, kFeatureDim>;

/// YCbCr skin mask -> open -> close -> largest 4-connected component.
/// Throws NoHandRegion when nothing survives.
imaging::Component segment_hand(const imaging::ImageU8& rgb, imaging::ChromaRange cb = imaging::kDefaultCb,
                                 imaging::ChromaRange cr = imaging::kDefaultCr);

FeatureVector features_from_component(const imaging::Component& component);
FeatureVector extract_gesture_features(const imaging::ImageU8& rgb);

/// Feature vectors grouped by gesture, stored standardized with the
/// per-dimension statistics used to standardize them.
class FeatureStore {
 public:
  struct Entry {
    std::string label;
    int id = 0;
    std::vector<FeatureVector> vectors;  // standardized
  };

  FeatureStore() = default;
  /// `entries` already standardized with (mean, stddev).
  FeatureStore(std::vector<Entry> entries, FeatureVector mean, FeatureVector stddev);

  /// Computes mean and population std over all raw vectors (std floored at
  /// 1e-9) and stores standardized copies.
  static FeatureStore build(std::vector<Entry> raw);

  FeatureVector standardize(const FeatureVector& raw) const;
  const std::vector<Entry>& entries() const { return entries_; }
  const FeatureVector& mean() const { return mean_; }
  const FeatureVector& stddev() const { return stddev_; }
  bool empty() const;

  /// One `<label>.txt` per gesture plus `standardization.txt`.
  void save(const std::filesystem::path& dir) const;
  static FeatureStore load(const std::filesystem::path& dir);

 private:
  std::vector<Entry> entries_;
  FeatureVector mean_{};
  FeatureVector stddev_{};
};

inline constexpr double kStdFloor = 1e-9;

struct Match {
  std::string label;
  int id = 0;
  double distance = 0.0;
};

/// Euclidean distance in standardized space; exact ties go to the smaller id.
Match nearest_match(const FeatureStore& store, const FeatureVector& raw_query);

}  // namespace gesture::models
