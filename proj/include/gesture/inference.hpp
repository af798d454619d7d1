// SPDX-License-Identifier: Apache-2.0
/**
 * @file inference.hpp
 * @brief End-to-end recognition (CNN, feature store or grid detector) on
 *        single images and on an ordered directory of frames.
 */
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gesture/detector.hpp"
#include "gesture/features.hpp"
#include "gesture/imaging.hpp"
#include "gesture/network.hpp"

namespace gesture::harness {

struct CnnPipeline {
  models::Network net;
  std::vector<std::string> class_names;  // index = network output
};

struct FeaturePipeline {
  models::FeatureStore store;
};

struct DetectorPipeline {
  models::Network net;
  models::DetectorConfig cfg;
  std::vector<std::string> class_names;  // index = grid class
  double score_threshold = 0.25;
  double nms_iou = 0.5;
};

using Recognizer = std::variant<CnnPipeline, FeaturePipeline, DetectorPipeline>;

struct InferenceResult {
  bool detected = false;
  std::string label;
  int class_id = -1;  // 0-based class index (label-map id - 1)
  double confidence = 0.0;
  /// Hand box from segmentation (cnn, features) or the best detection.
  std::optional<imaging::PixelBox> box;

  friend bool operator==(const InferenceResult&, const InferenceResult&) = default;
};

/// CNN confidence is the softmax probability of the winning class, feature
/// confidence 1 / (1 + distance), detector confidence the box score. An image
/// without a hand region (or without a box above threshold) yields
/// detected == false rather than an error.
InferenceResult infer(const Recognizer& recognizer, const imaging::ImageU8& rgb);
InferenceResult infer_file(const Recognizer& recognizer, const std::filesystem::path& image);

struct FrameRecord {
  std::size_t frame_index = 0;
  std::filesystem::path path;
  std::optional<InferenceResult> result;  // empty when the frame failed
  std::string error;
  double elapsed_ms = 0.0;                // decode + inference
};

/// PNG frames of a directory in lexicographic file-name order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Runs infer on each frame in order and hands one record per frame to
/// `sink`; undecodable frames produce an error record. Returns the count.
std::size_t run_stream(const Recognizer& recognizer, const std::filesystem::path& frames_dir,
                       const std::function<void(const FrameRecord&)>& sink);

}  // namespace gesture::harness
