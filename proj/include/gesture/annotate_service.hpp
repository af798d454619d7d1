// SPDX-License-Identifier: Apache-2.0
/**
 * @file annotate_service.hpp
 * @brief Labelling backend: dataset images and their YOLO sidecars over HTTP.
 *
 * Routes
 *
 *     GET  /api/images              [{id, width, height, annotated[, warning]}]
 *     GET  /api/images/{id}         PNG bytes
 *     GET  /api/annotations/{id}    {id, width, height, boxes: [{class_id, cx, cy, w, h}]}
 *     PUT  /api/annotations/{id}    same body shape; 204, 400 {error, field}, 404
 *     GET  /api/labelmap            [{id, name}]
 *     GET  /                        static UI bundle (or a placeholder page)
 *
 * Image ids are paths relative to the dataset root without the ".png"
 * suffix, using '/' separators (e.g. "three/0a1b..."). Boxes on the wire use
 * the label map's 1-based ids; sidecars store id - 1 as the YOLO class.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gesture/annotation.hpp"

namespace gesture::service {

struct ImageEntry {
  std::string id;
  int width = 0;
  int height = 0;
  bool annotated = false;
  std::string warning;  // set when a sidecar exists but does not parse
};

struct AnnotationRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<dataset::YoloAnnotation> boxes;  // class_id = label-map id
};

/// Outcome of a write: ok, or which field was rejected and why.
struct PutStatus {
  enum class Code { ok, invalid, not_found } code = Code::ok;
  std::string field;
  std::string message;
};

/// Filesystem side of the service. Reads never modify the dataset; writes
/// go through a temporary file and an atomic rename.
class AnnotationStore {
 public:
  /// Throws DataError if `root` is not a readable directory.
  AnnotationStore(std::filesystem::path root, dataset::LabelMap labels);

  const std::filesystem::path& root() const { return root_; }
  const dataset::LabelMap& labels() const { return labels_; }

  std::vector<ImageEntry> list_images() const;
  std::optional<std::filesystem::path> image_path(std::string_view id) const;
  std::optional<AnnotationRecord> get_annotation(std::string_view id) const;
  PutStatus put_annotation(std::string_view id, const std::vector<dataset::YoloAnnotation>& boxes) const;

 private:
  std::filesystem::path root_;
  dataset::LabelMap labels_;
};

/// Label map for a dataset root: <root>/label_map.pbtxt when present,
/// otherwise built from the sorted class directory names.
dataset::LabelMap dataset_label_map(const std::filesystem::path& root);

class AnnotateServer {
 public:
  AnnotateServer(AnnotationStore store, std::filesystem::path ui_dir = {});
  ~AnnotateServer();
  AnnotateServer(const AnnotateServer&) = delete;
  AnnotateServer& operator=(const AnnotateServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gesture::service
