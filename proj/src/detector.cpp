// SPDX-License-Identifier: Apache-2.0
#include "gesture/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gesture/error.hpp"

namespace gesture::models {

Tensor::Shape DetectorConfig::grid_shape() const {
  return {static_cast<std::size_t>(S), static_cast<std::size_t>(S), static_cast<std::size_t>(cell_width())};
}

void DetectorConfig::validate() const {
  if (S < 1 || B < 1 || C < 1) throw ContractViolation("detector config: S, B and C must be >= 1");
  if (lambda_coord < 0 || lambda_noobj < 0 || weight_decay < 0)
    throw ContractViolation("detector config: weights must be non-negative");
}

double iou(const NormBox& a, const NormBox& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

namespace {

void require_grid(const Tensor& t, const DetectorConfig& cfg, const char* what) {
  if (t.shape() != cfg.grid_shape())
    throw ContractViolation(std::string(what) + ": grid shape " + to_string(t.shape()) + " != " +
                            to_string(cfg.grid_shape()));
}

std::size_t cell_offset(const DetectorConfig& cfg, int row, int col) {
  return (static_cast<std::size_t>(row) * cfg.S + col) * cfg.cell_width();
}

NormBox slot_box(const double* cell, int slot, int row, int col, int S) {
  const double* b = cell + 5 * slot;
  return {(col + b[0]) / S, (row + b[1]) / S, b[2] * b[2], b[3] * b[3]};
}

bool has_object(const double* target_cell) { return target_cell[4] == 1.0; }

// Slot whose predicted box overlaps the target box most; ties -> lowest index.
int responsible_slot(const double* pred_cell, const double* target_cell, int row, int col, const DetectorConfig& cfg) {
  if (cfg.B == 1) return 0;
  const NormBox truth = slot_box(target_cell, 0, row, col, cfg.S);
  int best = 0;
  double best_iou = -1.0;
  for (int j = 0; j < cfg.B; ++j) {
    const double v = iou(slot_box(pred_cell, j, row, col, cfg.S), truth);
    if (v > best_iou) {
      best_iou = v;
      best = j;
    }
  }
  return best;
}

}  // namespace

Tensor encode_targets(std::span<const dataset::YoloAnnotation> anns, const DetectorConfig& cfg) {
  cfg.validate();
  Tensor grid(cfg.grid_shape());
  for (const auto& a : anns) {
    if (a.class_id < 0 || a.class_id >= cfg.C)
      throw ContractViolation("encode_targets: class " + std::to_string(a.class_id) + " out of range [0, " +
                              std::to_string(cfg.C) + ")");
    if (auto err = dataset::check_annotation(a)) throw ContractViolation("encode_targets: " + err->field + " " + err->message);
    const int col = std::min(static_cast<int>(std::floor(a.cx * cfg.S)), cfg.S - 1);
    const int row = std::min(static_cast<int>(std::floor(a.cy * cfg.S)), cfg.S - 1);
    double* cell = grid.data() + cell_offset(cfg, row, col);
    std::fill(cell, cell + cfg.cell_width(), 0.0);
    cell[0] = a.cx * cfg.S - col;
    cell[1] = a.cy * cfg.S - row;
    cell[2] = std::sqrt(a.w);
    cell[3] = std::sqrt(a.h);
    cell[4] = 1.0;
    cell[5 * cfg.B + a.class_id] = 1.0;
  }
  return grid;
}

std::vector<dataset::YoloAnnotation> decode_targets(const Tensor& grid, const DetectorConfig& cfg) {
  require_grid(grid, cfg, "decode_targets");
  std::vector<dataset::YoloAnnotation> out;
  for (int row = 0; row < cfg.S; ++row)
    for (int col = 0; col < cfg.S; ++col) {
      const double* cell = grid.data() + cell_offset(cfg, row, col);
      for (int j = 0; j < cfg.B; ++j) {
        if (cell[5 * j + 4] != 1.0) continue;
        const NormBox b = slot_box(cell, j, row, col, cfg.S);
        const double* cls = cell + 5 * cfg.B;
        const int k = static_cast<int>(std::max_element(cls, cls + cfg.C) - cls);
        out.push_back({k, b.cx, b.cy, b.w, b.h});
      }
    }
  return out;
}

std::vector<Detection> decode_predictions(const Tensor& grid, const DetectorConfig& cfg, double score_threshold) {
  require_grid(grid, cfg, "decode_predictions");
  std::vector<Detection> out;
  for (int row = 0; row < cfg.S; ++row)
    for (int col = 0; col < cfg.S; ++col) {
      const double* cell = grid.data() + cell_offset(cfg, row, col);
      const double* cls = cell + 5 * cfg.B;
      const int k = static_cast<int>(std::max_element(cls, cls + cfg.C) - cls);
      for (int j = 0; j < cfg.B; ++j) {
        const double score = std::clamp(cell[5 * j + 4], 0.0, 1.0);
        if (score < score_threshold) continue;
        NormBox b = slot_box(cell, j, row, col, cfg.S);
        b.w = std::clamp(b.w, 0.0, 1.0);
        b.h = std::clamp(b.h, 0.0, 1.0);
        out.push_back({b, k, score});
      }
    }
  return out;
}

namespace {

// Shared walk over the grid; `grad` may be null.
DetectorLoss accumulate(const Tensor& pred, const Tensor& target, const DetectorConfig& cfg, Tensor* grad) {
  DetectorLoss loss;
  for (int row = 0; row < cfg.S; ++row)
    for (int col = 0; col < cfg.S; ++col) {
      const std::size_t off = cell_offset(cfg, row, col);
      const double* p = pred.data() + off;
      const double* t = target.data() + off;
      double* g = grad ? grad->data() + off : nullptr;
      const bool obj = has_object(t);
      const int resp = obj ? responsible_slot(p, t, row, col, cfg) : -1;
      for (int j = 0; j < cfg.B; ++j) {
        const double* pb = p + 5 * j;
        if (j == resp) {
          const double* tb = t;  // target box lives in slot 0
          for (int q = 0; q < 4; ++q) {
            const double d = pb[q] - tb[q];
            loss.localization += cfg.lambda_coord * d * d;
            if (g) g[5 * j + q] += 2.0 * cfg.lambda_coord * d;
          }
          const double dc = pb[4] - 1.0;
          loss.confidence += dc * dc;
          if (g) g[5 * j + 4] += 2.0 * dc;
        } else {
          loss.confidence += cfg.lambda_noobj * pb[4] * pb[4];
          if (g) g[5 * j + 4] += 2.0 * cfg.lambda_noobj * pb[4];
        }
      }
      if (obj) {
        for (int c = 0; c < cfg.C; ++c) {
          const double d = p[5 * cfg.B + c] - t[5 * cfg.B + c];
          loss.classification += d * d;
          if (g) g[5 * cfg.B + c] += 2.0 * d;
        }
      }
    }
  return loss;
}

}  // namespace

DetectorLoss detector_loss(const Tensor& pred, const Tensor& target, const DetectorConfig& cfg,
                           std::span<const nn::Parameter* const> params) {
  cfg.validate();
  require_grid(pred, cfg, "detector_loss prediction");
  require_grid(target, cfg, "detector_loss target");
  DetectorLoss loss = accumulate(pred, target, cfg, nullptr);
  loss.regularization = nn::l2_penalty(params, cfg.weight_decay);
  loss.total = loss.localization + loss.confidence + loss.classification + loss.regularization;
  return loss;
}

Tensor detector_loss_grad(const Tensor& pred, const Tensor& target, const DetectorConfig& cfg) {
  cfg.validate();
  require_grid(pred, cfg, "detector_loss prediction");
  require_grid(target, cfg, "detector_loss target");
  Tensor grad(pred.shape());
  accumulate(pred, target, cfg, &grad);
  return grad;
}

std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const Detection& d = detections[idx];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace gesture::models
