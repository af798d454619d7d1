// SPDX-License-Identifier: Apache-2.0
#include "gesture/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "gesture/error.hpp"
#include "gesture/features.hpp"
#include "gesture/png_io.hpp"

namespace gesture::harness {

namespace fs = std::filesystem;
using models::Network;
using models::TrainState;

Tensor preprocess_for_classifier(const imaging::ImageU8& rgb, int side, imaging::PixelBox* hand_box) {
  if (side < 4) throw ContractViolation("classifier input side must be >= 4");
  const auto hand = models::segment_hand(rgb);
  const auto gray = imaging::to_gray(rgb);
  const auto& b = hand.box;
  const int extent = std::max(b.width(), b.height());
  imaging::ImageU8 square(extent, extent, 1, 0);
  const int ox = (extent - b.width()) / 2, oy = (extent - b.height()) / 2;
  for (int y = b.y_min; y <= b.y_max; ++y)
    for (int x = b.x_min; x <= b.x_max; ++x)
      if (hand.mask.get(x, y)) square.at(ox + x - b.x_min, oy + y - b.y_min) = gray.at(x, y);
  const auto small = imaging::resize(square, side, side, imaging::ResizeMode::bilinear);
  Tensor out({1, static_cast<std::size_t>(side), static_cast<std::size_t>(side)});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = small.data[i] / 255.0;
  if (hand_box) *hand_box = b;
  return out;
}

Tensor preprocess_for_detector(const imaging::ImageU8& rgb, int side) {
  if (rgb.channels != 3) throw ContractViolation("detector input must be RGB");
  const auto img = rgb.width == side && rgb.height == side
                       ? rgb
                       : imaging::resize(rgb, side, side, imaging::ResizeMode::bilinear);
  const auto s = static_cast<std::size_t>(side);
  Tensor out({3, s, s});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x)
        out.at(c, y, x) = img.at(static_cast<int>(x), static_cast<int>(y), static_cast<int>(c)) / 255.0;
  return out;
}

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::classifier: return "classifier";
    case TrainMode::detector: return "detector";
    case TrainMode::finetune: return "finetune";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view s) {
  if (s == "classifier") return TrainMode::classifier;
  if (s == "detector") return TrainMode::detector;
  if (s == "finetune") return TrainMode::finetune;
  throw ContractViolation("unknown training mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractViolation("epochs must be >= 1");
  if (batch_size < 1) throw ContractViolation("batch_size must be >= 1");
  // Zero is accepted so that a run can record metrics without moving.
  if (!(learning_rate >= 0.0)) throw ContractViolation("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ContractViolation("weight_decay must be >= 0");
  if (!(max_grad_norm >= 0.0)) throw ContractViolation("max_grad_norm must be >= 0");
  if (mode == TrainMode::detector) detector.validate();
}

void MetricsLog::append(const EpochMetrics& row) {
  if (!rows.empty() && row.epoch <= rows.back().epoch)
    throw ContractViolation("metrics epochs must be strictly increasing");
  rows.push_back(row);
}

std::vector<Example> load_examples(std::span<const dataset::ManifestItem> items, const TrainConfig& cfg,
                                   const dataset::LabelMap& labels) {
  std::vector<Example> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    const auto& path = item.image_path;
    Example ex;
    ex.source = item.image_id;
    imaging::ImageU8 img;
    try {
      img = imaging::read_png(path);
    } catch (const std::exception& e) {
      throw DataError("cannot read " + path.string() + ": " + e.what());
    }
    if (cfg.mode == TrainMode::detector) {
      auto sidecar = path;
      sidecar.replace_extension(".txt");
      try {
        ex.boxes = dataset::read_yolo_file(sidecar);
      } catch (const std::exception& e) {
        throw DataError("cannot read " + sidecar.string() + ": " + e.what());
      }
      if (ex.boxes.empty()) throw DataError(sidecar.string() + ": no boxes");
      if (img.channels != 3) throw DataError(path.string() + ": detector images must be RGB");
      ex.input = preprocess_for_detector(img);
      try {
        ex.target = models::encode_targets(ex.boxes, cfg.detector);
      } catch (const ContractViolation& e) {
        throw DataError(sidecar.string() + ": " + e.what());
      }
      ex.label = ex.boxes.front().class_id;
    } else {
      const auto id = labels.id_of(item.class_name);
      if (!id) throw DataError(path.string() + ": class '" + item.class_name + "' is not in the label map");
      ex.label = *id - 1;
      if (img.channels != 3) throw DataError(path.string() + ": classifier images must be RGB");
      try {
        ex.input = preprocess_for_classifier(img);
      } catch (const NoHandRegion&) {
        throw DataError(path.string() + ": no hand region");
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

TrainData load_train_data(const dataset::DatasetManifest& manifest, const TrainConfig& cfg,
                          const dataset::LabelMap* labels) {
  const auto fallback = dataset::build_label_map(manifest.class_names());
  const auto& map = labels ? *labels : fallback;
  const auto train_items = manifest.subset(dataset::Split::train);
  const auto val_items = manifest.subset(dataset::Split::val);
  if (train_items.empty()) throw ContractViolation("manifest has no training split");
  return {load_examples(train_items, cfg, map), load_examples(val_items, cfg, map)};
}

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct Outcome {
  double loss = 0.0;
  int predicted = 0;
  double iou = 0.0;
};

bool is_detector(const TrainConfig& cfg) { return cfg.mode == TrainMode::detector; }

Outcome score(const Tensor& output, const Example& ex, const TrainConfig& cfg) {
  Outcome o;
  if (!is_detector(cfg)) {
    const auto probs = nn::softmax(output);
    o.loss = nn::cross_entropy(probs, ex.label);
    o.predicted = static_cast<int>(argmax(output.values()));
    return o;
  }
  const auto grid = output.reshaped(cfg.detector.grid_shape());
  o.loss = models::detector_loss(grid, ex.target, cfg.detector).total;
  const auto dets = models::decode_predictions(grid, cfg.detector, 0.0);
  const models::Detection* best = nullptr;
  for (const auto& d : dets)
    if (!best || d.score > best->score) best = &d;
  if (best) {
    o.predicted = best->class_id;
    const auto& t = ex.boxes.front();
    o.iou = models::iou(best->box, {t.cx, t.cy, t.w, t.h});
  }
  return o;
}

/// Loss, correctness and parameter gradients for one example.
Outcome example_gradient(const Network& net, const Example& ex, const TrainConfig& cfg, std::vector<Tensor>& grads) {
  const auto trace = net.forward_trace(ex.input);
  const auto& output = trace.output();
  const Outcome o = score(output, ex, cfg);
  Tensor d_out;
  if (!is_detector(cfg)) {
    d_out = nn::softmax_cross_entropy_grad(nn::softmax(output), ex.label);
  } else {
    d_out = models::detector_loss_grad(output.reshaped(cfg.detector.grid_shape()), ex.target, cfg.detector)
                .reshaped(output.shape());
  }
  grads = net.backward(trace, d_out);
  return o;
}

void check_compatible(const Network& net, const TrainConfig& cfg) {
  const auto& out = net.output_shape();
  const std::size_t n = element_count(out);
  if (is_detector(cfg)) {
    if (n != element_count(cfg.detector.grid_shape()))
      throw ContractViolation("network output " + gesture::to_string(out) + " does not match detector grid " +
                              gesture::to_string(cfg.detector.grid_shape()));
  } else if (net.head() != models::Head::softmax) {
    throw ContractViolation("classifier training needs a softmax-head network");
  }
}

TrainResult run(Network net, const TrainData& data, const TrainConfig& cfg, std::uint64_t step,
                const std::optional<TrainState>& start) {
  cfg.validate();
  if (data.train.empty()) throw ContractViolation("training split is empty");
  check_compatible(net, cfg);
  if (cfg.mode == TrainMode::finetune) {
    if (cfg.frozen_prefixes.empty())
      models::set_trainable(net, "conv", false);
    else
      for (const auto& p : cfg.frozen_prefixes) models::set_trainable(net, p, false);
  }

  TrainResult result;
  const bool checkpoints = !cfg.checkpoint_dir.empty();
  if (checkpoints) fs::create_directories(cfg.checkpoint_dir);
  std::optional<std::uint64_t> last_saved;

  Rng rng(cfg.seed);
  int first_epoch = 1;
  if (start) {
    rng = Rng::from_state(start->rng);
    first_epoch = static_cast<int>(start->epoch);
  }

  const auto params = net.parameters();
  const std::size_t n = data.train.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  std::vector<std::size_t> order(n);
  std::vector<Tensor> sum, grads;

  for (int epoch = first_epoch; epoch <= cfg.epochs; ++epoch) {
    const Rng::State epoch_rng = rng.state();
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    std::uint64_t correct = 0, seen = 0;
    std::size_t first_batch = 0;
    if (start && epoch == first_epoch) {
      first_batch = start->batch_index;
      loss_sum = start->loss_sum;
      correct = start->correct;
      seen = start->seen;
    }

    for (std::size_t b = first_batch; b < batches; ++b) {
      sum.clear();
      for (const auto* p : params) sum.emplace_back(p->value.shape());
      const std::size_t lo = b * bs, hi = std::min(n, lo + bs);
      for (std::size_t k = lo; k < hi; ++k) {
        const auto& ex = data.train[order[k]];
        const Outcome o = example_gradient(net, ex, cfg, grads);
        loss_sum += o.loss;
        correct += o.predicted == ex.label ? 1 : 0;
        ++seen;
        for (std::size_t i = 0; i < sum.size(); ++i) {
          auto dst = sum[i].values();
          const auto src = grads[i].values();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      double inv = 1.0 / static_cast<double>(hi - lo);
      if (cfg.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : sum)
          for (double v : g.values()) sq += v * v;
        const double norm = std::sqrt(sq) * inv;
        if (!std::isfinite(norm))
          throw std::runtime_error("training diverged at step " + std::to_string(step + 1) +
                                   " (non-finite gradient); lower the learning rate");
        if (norm > cfg.max_grad_norm) inv *= cfg.max_grad_norm / norm;
      }
      for (auto& g : sum)
        for (auto& v : g.values()) v *= inv;
      nn::sgd_step(std::span<nn::Parameter* const>(params), sum, cfg.learning_rate, cfg.weight_decay);
      ++step;

      const TrainState state{static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(b + 1), epoch_rng,
                             loss_sum, correct, seen};
      if (checkpoints && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
        models::save_checkpoint(net, step, checkpoint_path(cfg.checkpoint_dir, step), state);
        last_saved = step;
      }
      if (cfg.stop_after_steps && step >= *cfg.stop_after_steps) {
        if (checkpoints && last_saved != step)
          models::save_checkpoint(net, step, checkpoint_path(cfg.checkpoint_dir, step), state);
        result.interrupted = true;
        result.state = state;
        result.steps = step;
        result.network = std::move(net);
        return result;
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    m.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    if (!data.val.empty()) {
      EvalConfig all;
      all.max_steps = data.val.size();
      const auto ev = evaluate(net, data.val, cfg, all);
      m.val_loss = ev.mean_loss;
      m.val_accuracy = ev.accuracy;
    }
    result.log.append(m);
    if (cfg.target_val_accuracy && !data.val.empty() && m.val_accuracy >= *cfg.target_val_accuracy) {
      result.reached_target_epoch = epoch;
      break;
    }
  }

  if (checkpoints && last_saved != step) models::save_checkpoint(net, step, checkpoint_path(cfg.checkpoint_dir, step));
  result.steps = step;
  result.network = std::move(net);
  return result;
}

}  // namespace

TrainResult train(Network net, const TrainData& data, const TrainConfig& cfg) {
  return run(std::move(net), data, cfg, 0, std::nullopt);
}

TrainResult resume(const models::Checkpoint& checkpoint, const TrainData& data, const TrainConfig& cfg) {
  if (!checkpoint.train_state) throw ContractViolation("checkpoint has no training state to resume from");
  return run(checkpoint.network, data, cfg, checkpoint.step, checkpoint.train_state);
}

fs::path checkpoint_path(const fs::path& dir, std::uint64_t step) {
  char name[40];
  std::snprintf(name, sizeof name, "step-%08llu.ckpt", static_cast<unsigned long long>(step));
  return dir / name;
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_regular_file() || !name.starts_with("step-") || !name.ends_with(".ckpt")) continue;
    if (!best || name > best->filename().string()) best = entry.path();
  }
  return best;
}

EvalResult evaluate(const Network& net, std::span<const Example> items, const TrainConfig& cfg,
                    const EvalConfig& eval_cfg) {
  if (items.empty()) throw ContractViolation("evaluate: no items");
  if (eval_cfg.max_steps < 1) throw ContractViolation("evaluate: max_steps must be >= 1");
  check_compatible(net, cfg);
  const std::size_t classes =
      is_detector(cfg) ? static_cast<std::size_t>(cfg.detector.C) : element_count(net.output_shape());
  EvalResult r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  const std::size_t count = std::min(eval_cfg.max_steps, items.size());
  double loss = 0.0, iou_sum = 0.0;
  std::size_t hits = 0, localized = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& ex = items[i];
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= classes)
      throw ContractViolation("evaluate: label " + std::to_string(ex.label) + " out of range");
    const Outcome o = score(net.forward(ex.input), ex, cfg);
    loss += o.loss;
    ++r.confusion[static_cast<std::size_t>(ex.label)][static_cast<std::size_t>(o.predicted)];
    if (o.predicted == ex.label) {
      ++hits;
      if (o.iou >= eval_cfg.iou_threshold) ++localized;
    }
    iou_sum += o.iou;
  }
  r.evaluated = count;
  const double c = static_cast<double>(count);
  r.accuracy = static_cast<double>(hits) / c;
  r.mean_loss = loss / c;
  if (is_detector(cfg)) {
    r.mean_iou = iou_sum / c;
    r.localized_rate = static_cast<double>(localized) / c;
  }
  return r;
}

}  // namespace gesture::harness
