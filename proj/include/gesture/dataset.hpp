// SPDX-License-Identifier: Apache-2.0
/**
 * @file dataset.hpp
 * @brief Dataset manifests, deterministic train/validation splits, directory
 *        ingestion and image identifiers.
 *
 * Manifest files are line oriented, one item per line:
 *
 *     id<TAB>path<TAB>class<TAB>split
 *
 * with split one of `train` or `val`. Paths are written relative to the
 * manifest's directory. Lines starting with '#' are comments; the writer
 * records the split seed as `# seed<TAB><n>`.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gesture/rng.hpp"

namespace gesture::dataset {

enum class Split { unassigned, train, val };

struct ManifestItem {
  std::string image_id;
  std::filesystem::path image_path;
  std::string class_name;
  Split split = Split::unassigned;

  friend bool operator==(const ManifestItem&, const ManifestItem&) = default;
};

struct DatasetManifest {
  std::vector<ManifestItem> items;
  std::uint64_t seed = 0;
  /// Non-fatal ingestion notes (skipped files).
  std::vector<std::string> warnings;

  std::vector<ManifestItem> subset(Split s) const;
  /// Class names in order of first appearance.
  std::vector<std::string> class_names() const;
};

/// round-half-up(fraction * n)
std::size_t train_count(std::size_t n, double train_fraction);

struct SplitResult {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

/// Seeded Fisher-Yates shuffle, then the first train_count() ids train.
SplitResult split_dataset(std::span<const std::string> item_ids, double train_fraction, std::uint64_t seed);
void assign_split(DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

/// Scans root/<class>/<image>.png. Directories in lexicographic order, then
/// files. YOLO (.txt) and VOC (.xml) sidecars are recognised silently; any
/// other non-PNG file is skipped with a warning. Throws DataError for a
/// missing/empty root or an empty class directory.
DatasetManifest ingest_directory(const std::filesystem::path& root);

std::string write_manifest(const DatasetManifest& manifest, const std::filesystem::path& base_dir);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// 128 random bits as 32 lowercase hex characters.
std::string unique_image_id();
std::string unique_image_id(Rng& rng);

std::string_view to_string(Split s);

}  // namespace gesture::dataset
