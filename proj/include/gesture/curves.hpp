// SPDX-License-Identifier: Apache-2.0
/**
 * @file curves.hpp
 * @brief Training-curve export: metrics CSV and a two-chart SVG
 *        (loss and accuracy, train vs validation).
 */
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "gesture/training.hpp"

namespace gesture::harness {

inline constexpr std::string_view kCurvesHeader = "epoch,train_loss,val_loss,train_acc,val_acc";

/// Header line plus one row per epoch; reals with 6 decimals.
std::string curves_csv(const MetricsLog& log);
MetricsLog parse_curves_csv(std::string_view text);

std::string curves_svg(const MetricsLog& log);

enum class CurveFormat { csv, svg };
void export_curves(const MetricsLog& log, const std::filesystem::path& path, CurveFormat format);
MetricsLog read_curves_csv(const std::filesystem::path& path);

}  // namespace gesture::harness
