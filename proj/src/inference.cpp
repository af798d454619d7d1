// SPDX-License-Identifier: Apache-2.0
#include "gesture/inference.hpp"

#include <algorithm>
#include <chrono>

#include "gesture/error.hpp"
#include "gesture/png_io.hpp"
#include "gesture/training.hpp"

namespace gesture::harness {

namespace fs = std::filesystem;

namespace {

std::string name_for(const std::vector<std::string>& names, int id) {
  if (id >= 0 && static_cast<std::size_t>(id) < names.size()) return names[static_cast<std::size_t>(id)];
  return std::to_string(id);
}

InferenceResult run(const CnnPipeline& p, const imaging::ImageU8& rgb) {
  InferenceResult r;
  imaging::PixelBox box;
  Tensor input;
  try {
    input = preprocess_for_classifier(rgb, static_cast<int>(p.net.input_shape().back()), &box);
  } catch (const NoHandRegion&) {
    return r;
  }
  const Tensor probs = p.net.predict(input);
  const auto v = probs.values();
  const auto best = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  r.detected = true;
  r.class_id = best;
  r.label = name_for(p.class_names, best);
  r.confidence = v[static_cast<std::size_t>(best)];
  r.box = box;
  return r;
}

InferenceResult run(const FeaturePipeline& p, const imaging::ImageU8& rgb) {
  InferenceResult r;
  imaging::Component hand;
  try {
    hand = models::segment_hand(rgb);
  } catch (const NoHandRegion&) {
    return r;
  }
  const auto m = models::nearest_match(p.store, models::features_from_component(hand));
  r.detected = true;
  r.class_id = m.id - 1;
  r.label = m.label;
  r.confidence = 1.0 / (1.0 + m.distance);
  r.box = hand.box;
  return r;
}

InferenceResult run(const DetectorPipeline& p, const imaging::ImageU8& rgb) {
  InferenceResult r;
  const int side = static_cast<int>(p.net.input_shape().back());
  const Tensor out = p.net.forward(preprocess_for_detector(rgb, side));
  const auto grid = out.reshaped(p.cfg.grid_shape());
  const auto dets = models::nms(models::decode_predictions(grid, p.cfg, p.score_threshold), p.nms_iou);
  if (dets.empty()) return r;
  const auto best = std::max_element(dets.begin(), dets.end(),
                                     [](const models::Detection& a, const models::Detection& b) {
                                       return a.score < b.score;
                                     });
  r.detected = true;
  r.class_id = best->class_id;
  r.label = name_for(p.class_names, best->class_id);
  r.confidence = best->score;
  dataset::YoloAnnotation a{best->class_id, std::clamp(best->box.cx, 0.0, 1.0), std::clamp(best->box.cy, 0.0, 1.0),
                            std::clamp(best->box.w, 0.0, 1.0), std::clamp(best->box.h, 0.0, 1.0)};
  r.box = dataset::yolo_to_pixel_box(a, rgb.width, rgb.height);
  return r;
}

}  // namespace

InferenceResult infer(const Recognizer& recognizer, const imaging::ImageU8& rgb) {
  if (rgb.channels != 3) throw ContractViolation("infer: image must be RGB");
  return std::visit([&](const auto& p) { return run(p, rgb); }, recognizer);
}

InferenceResult infer_file(const Recognizer& recognizer, const fs::path& image) {
  return infer(recognizer, imaging::read_png(image));
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("frames directory not found: " + dir.string());
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png") frames.push_back(entry.path());
  }
  std::sort(frames.begin(), frames.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return frames;
}

std::size_t run_stream(const Recognizer& recognizer, const fs::path& frames_dir,
                       const std::function<void(const FrameRecord&)>& sink) {
  const auto frames = list_frames(frames_dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    FrameRecord rec;
    rec.frame_index = i;
    rec.path = frames[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      rec.result = infer_file(recognizer, frames[i]);
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    rec.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    sink(rec);
  }
  return frames.size();
}

}  // namespace gesture::harness
