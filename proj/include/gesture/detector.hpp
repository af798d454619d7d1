// SPDX-License-Identifier: Apache-2.0
/**
 * @file detector.hpp
 * @brief SxS grid single-shot detection: target encoding, loss, IoU and NMS.
 *
 * A grid tensor has shape S x S x (5B + C). Each cell holds B boxes of
 * (x offset, y offset, sqrt w, sqrt h, confidence) followed by C class
 * scores. Offsets are relative to the cell, sizes to the image.
 */
#pragma once

#include <span>
#include <vector>

#include "gesture/annotation.hpp"
#include "gesture/layers.hpp"
#include "gesture/tensor.hpp"

namespace gesture::models {

struct DetectorConfig {
  int S = 3;
  int B = 1;
  int C = 6;
  double lambda_coord = 5.0;
  double lambda_noobj = 0.5;
  double weight_decay = 0.0;

  int cell_width() const { return 5 * B + C; }
  Tensor::Shape grid_shape() const;
  void validate() const;
};

/// Normalised centre-size box.
struct NormBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

double iou(const NormBox& a, const NormBox& b);

/// The cell containing a box centre is responsible for it (row = floor(cy*S),
/// col = floor(cx*S), clamped to S-1). The box goes to slot 0 of that cell
/// with confidence 1 and a one-hot class; a later annotation replaces an
/// earlier one in the same cell.
Tensor encode_targets(std::span<const dataset::YoloAnnotation> anns, const DetectorConfig& cfg);

/// Boxes in slots with confidence 1, in row-major cell order.
std::vector<dataset::YoloAnnotation> decode_targets(const Tensor& grid, const DetectorConfig& cfg);

struct Detection {
  NormBox box;
  int class_id = 0;
  double score = 0.0;
};

/// Predicted boxes with clamped confidence >= threshold; class = argmax of
/// the cell's class scores.
std::vector<Detection> decode_predictions(const Tensor& grid, const DetectorConfig& cfg, double score_threshold);

struct DetectorLoss {
  double total = 0.0;
  double localization = 0.0;
  double confidence = 0.0;
  double classification = 0.0;
  double regularization = 0.0;
};

/// Sum-squared grid loss. In a cell with an object, the predictor slot whose
/// decoded box best overlaps the target (lowest index on ties) is
/// responsible: localization = lambda_coord * squared offset and sqrt-size
/// error; confidence = (c - 1)^2. Every other slot contributes
/// lambda_noobj * c^2. Classification = squared error of class scores in
/// object cells. Regularization = weight_decay * sum of squared weights.
DetectorLoss detector_loss(const Tensor& pred, const Tensor& target, const DetectorConfig& cfg,
                           std::span<const nn::Parameter* const> params = {});
/// Gradient of total - regularization with respect to `pred`.
Tensor detector_loss_grad(const Tensor& pred, const Tensor& target, const DetectorConfig& cfg);

/// Per-class greedy suppression: highest score first (input order on equal
/// scores), dropping same-class boxes with IoU > threshold.
std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold);

}  // namespace gesture::models
