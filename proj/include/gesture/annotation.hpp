// SPDX-License-Identifier: Apache-2.0
/**
 * @file annotation.hpp
 * @brief YOLO text records, the Pascal VOC XML subset, and label maps.
 *
 * Box convention: pixel boxes are inclusive, so a box covering columns
 * x_min..x_max is (x_max - x_min + 1) pixels wide. YOLO class ids are
 * 0-based; label-map ids are 1-based, so YOLO class k is label id k + 1.
 */
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gesture/imaging.hpp"

namespace gesture::dataset {

using imaging::PixelBox;

struct YoloAnnotation {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const YoloAnnotation&, const YoloAnnotation&) = default;
};

/// Tolerance for a box's half extents leaving the unit square.
inline constexpr double kBoxTolerance = 1e-6;

/// Field name and message of the first violated invariant, if any
/// (e.g. {"w", "must be in (0, 1]"}).
struct FieldError {
  std::string field;
  std::string message;
};
std::optional<FieldError> check_annotation(const YoloAnnotation& ann);

/// One "class cx cy w h" record. Throws ParseError carrying `line_number`.
YoloAnnotation parse_yolo_line(std::string_view line, std::size_t line_number = 1);
/// Whole sidecar file; blank lines are skipped.
std::vector<YoloAnnotation> parse_yolo(std::string_view text);
/// One newline-terminated line per record, reals with 6 decimals.
std::string write_yolo(std::span<const YoloAnnotation> anns);

std::vector<YoloAnnotation> read_yolo_file(const std::filesystem::path& path);
/// Writes through a temporary file in the same directory and renames it into place.
void write_yolo_file(const std::filesystem::path& path, std::span<const YoloAnnotation> anns);

struct VocObject {
  std::string name;
  PixelBox box;
};

struct VocDocument {
  std::string filename;
  int width = 0;
  int height = 0;
  std::vector<VocObject> objects;
};

VocDocument parse_voc_xml(std::string_view xml);
std::string write_voc_xml(const VocDocument& doc);

YoloAnnotation voc_to_yolo(const PixelBox& box, int class_id, int img_w, int img_h);
/// Inverse of voc_to_yolo; exact for any box produced by it.
PixelBox yolo_to_pixel_box(const YoloAnnotation& ann, int img_w, int img_h);

struct LabelEntry {
  std::string name;
  int id = 0;

  friend bool operator==(const LabelEntry&, const LabelEntry&) = default;
};

struct LabelMap {
  std::vector<LabelEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::optional<int> id_of(std::string_view name) const;
  const std::string& name_of(int id) const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Ids 1..N in input order. Duplicate or empty names are contract violations.
LabelMap build_label_map(std::span<const std::string> names);

/// Text form: `item { name: 'x' id: 1 }` blocks, one field per line.
std::string write_label_map(const LabelMap& map);
LabelMap parse_label_map(std::string_view text);
LabelMap read_label_map(const std::filesystem::path& path);
void write_label_map_file(const std::filesystem::path& path, const LabelMap& map);

}  // namespace gesture::dataset
