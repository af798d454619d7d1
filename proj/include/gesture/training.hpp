// SPDX-License-Identifier: Apache-2.0
/**
 * @file training.hpp
 * @brief Input preprocessing, the SGD training loop with checkpoint/resume,
 *        and evaluation.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gesture/annotation.hpp"
#include "gesture/checkpoint.hpp"
#include "gesture/dataset.hpp"
#include "gesture/detector.hpp"
#include "gesture/imaging.hpp"
#include "gesture/network.hpp"

namespace gesture::harness {

inline constexpr int kClassifierSide = 32;
inline constexpr int kDetectorSide = 96;

/// Hand crop for the classifier: segment, zero non-hand pixels of the Y
/// channel, centre the hand box on a square canvas, resize (bilinear) to
/// side x side and scale to [0, 1]. Shape 1 x side x side.
/// Throws NoHandRegion when segmentation finds nothing.
Tensor preprocess_for_classifier(const imaging::ImageU8& rgb, int side = kClassifierSide,
                                 imaging::PixelBox* hand_box = nullptr);

/// Full RGB frame resized to side x side, scaled to [0, 1]. Shape 3 x side x side.
Tensor preprocess_for_detector(const imaging::ImageU8& rgb, int side = kDetectorSide);

enum class TrainMode { classifier, detector, finetune };
std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view s);

struct TrainConfig {
  int epochs = 40;
  int batch_size = 8;
  double learning_rate = 0.02;
  double weight_decay = 1e-4;  // L2 lambda on weights
  /// Batch gradients with a larger global L2 norm are rescaled to it; 0 disables.
  double max_grad_norm = 5.0;
  std::uint64_t seed = 42;
  std::uint64_t checkpoint_every = 0;  // steps; 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;
  TrainMode mode = TrainMode::classifier;
  models::DetectorConfig detector;
  /// Finetune mode freezes parameters with these prefixes ("conv" if empty).
  std::vector<std::string> frozen_prefixes;
  /// Stop after the first epoch whose validation accuracy reaches this.
  std::optional<double> target_val_accuracy;
  /// Stop (and checkpoint, if a directory is set) once this many total steps ran.
  std::optional<std::uint64_t> stop_after_steps;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct MetricsLog {
  std::vector<EpochMetrics> rows;

  void append(const EpochMetrics& row);  // epochs must increase
  bool empty() const { return rows.empty(); }
  friend bool operator==(const MetricsLog&, const MetricsLog&) = default;
};

/// One preprocessed input. Classification uses `label`; detection uses
/// `target` (encoded grid) and `boxes`, with `label` the first box's class.
struct Example {
  Tensor input;
  int label = 0;
  Tensor target;
  std::vector<dataset::YoloAnnotation> boxes;
  std::string source;
};

struct TrainData {
  std::vector<Example> train;
  std::vector<Example> val;
};

/// Reads and preprocesses the train/val splits of a manifest. Classification
/// labels are label-map id - 1 (manifest class order when `labels` is empty);
/// detection targets come from each image's YOLO sidecar (<stem>.txt).
/// Throws DataError naming the path of any unreadable item.
TrainData load_train_data(const dataset::DatasetManifest& manifest, const TrainConfig& cfg,
                          const dataset::LabelMap* labels = nullptr);
std::vector<Example> load_examples(std::span<const dataset::ManifestItem> items, const TrainConfig& cfg,
                                   const dataset::LabelMap& labels);

struct TrainResult {
  models::Network network;
  MetricsLog log;
  std::uint64_t steps = 0;
  bool interrupted = false;                         // stopped by stop_after_steps
  std::optional<models::TrainState> state;          // set when interrupted
  std::optional<int> reached_target_epoch;          // first epoch meeting target_val_accuracy
};

/// Mini-batch SGD: per epoch the training set is shuffled (Fisher-Yates with
/// an Rng seeded from cfg.seed), gradients are averaged over each batch and
/// applied with weight decay. Losses in the log are mean data losses (cross
/// entropy or grid loss, without the L2 term); validation metrics are
/// computed after each epoch. Single-threaded and deterministic.
TrainResult train(models::Network net, const TrainData& data, const TrainConfig& cfg);

/// Continues a run from a checkpoint holding a training state. The log holds
/// only epochs completed after resuming.
TrainResult resume(const models::Checkpoint& checkpoint, const TrainData& data, const TrainConfig& cfg);

/// <dir>/step-<8 digit step>.ckpt
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step);
/// Highest-step checkpoint in `dir`, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir);

struct EvalConfig {
  std::size_t max_steps = 10000;
  double iou_threshold = 0.5;  // detector: a hit also needs this overlap
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  double mean_iou = 0.0;        // detector only
  double localized_rate = 0.0;  // detector only: right class and IoU >= threshold
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t evaluated = 0;
};

/// Evaluates the first min(max_steps, items) examples in order. The predicted
/// class is the classifier argmax, or the class of the detector's most
/// confident box; accuracy = trace(confusion) / evaluated.
EvalResult evaluate(const models::Network& net, std::span<const Example> items, const TrainConfig& cfg,
                    const EvalConfig& eval_cfg = {});

}  // namespace gesture::harness
