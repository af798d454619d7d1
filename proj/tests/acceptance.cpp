// SPDX-License-Identifier: Apache-2.0
// Acceptance gates. One PASS/FAIL line per gate; exit status 1 if any fails.
// Thresholds are pinned below and must not be tuned to make a run pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gesture/checkpoint.hpp"
#include "gesture/dataset.hpp"
#include "gesture/detector.hpp"
#include "gesture/features.hpp"
#include "gesture/error.hpp"
#include "gesture/inference.hpp"
#include "gesture/kernels.hpp"
#include "gesture/layers.hpp"
#include "gesture/network.hpp"
#include "gesture/png_io.hpp"
#include "gesture/synthetic.hpp"
#include "gesture/training.hpp"

using namespace gesture;
namespace fs = std::filesystem;

namespace limits {
constexpr double kGradEps = 1e-5;
constexpr double kGradMaxError = 1e-4;
constexpr int kGradSeeds = 10;
constexpr double kGradSeconds = 30.0;

constexpr int kClassifierClasses = 6;
constexpr int kClassifierPerClass = 20;
constexpr double kSplitFraction = 0.8;
constexpr std::uint64_t kSplitSeed = 42;
constexpr double kClassifierTargetAcc = 0.90;
constexpr int kClassifierMaxEpochs = 200;
constexpr double kClassifierSeconds = 300.0;

constexpr int kEnrolledPerGesture = 13;
constexpr int kQueriesPerGesture = 20;
constexpr double kFeatureStoreAcc = 0.80;

constexpr double kTransferTargetAcc = 0.85;

constexpr int kIouPairs = 1000;
constexpr int kIouRaster = 100;
constexpr double kIouMaxDelta = 1e-9;

constexpr int kLattice = 20;
constexpr double kGridMaxDelta = 1e-12;

constexpr int kSegImages = 100;
constexpr double kSegIou = 0.5;
constexpr int kSegMinHits = 95;

constexpr int kStreamFrames = 30;
constexpr double kStreamMaxMs = 100.0;
}  // namespace limits

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(bool pass, const char* gate, const std::string& detail) {
  std::printf("%s  %-22s %s\n", pass ? "PASS" : "FAIL", gate, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor random_tensor(Tensor::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

nn::Parameter param(const std::string& name, Tensor v, nn::ParamKind kind) { return {name, std::move(v), kind, true}; }

class TempDir {
 public:
  TempDir() {
    Rng rng(std::random_device{}());
    path_ = fs::temp_directory_path() / ("gesture-acceptance-" + dataset::unique_image_id(rng));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// ---------------------------------------------------------------------------

void gate_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_where;
  auto note = [&](double err, const std::string& where) {
    if (err > worst) {
      worst = err;
      worst_where = where;
    }
  };
  for (int s = 0; s < limits::kGradSeeds; ++s) {
    Rng rng(1000 + static_cast<std::uint64_t>(s));
    const nn::Layer conv = nn::Conv2d{"conv", param("conv.weight", random_tensor({3, 2, 3, 3}, rng), nn::ParamKind::weight),
                                      param("conv.bias", random_tensor({3}, rng), nn::ParamKind::bias),
                                      1 + static_cast<int>(s % 2), static_cast<int>(s % 2)};
    note(nn::gradient_check(conv, random_tensor({2, 6, 6}, rng), limits::kGradEps, rng).max_relative_error, "conv2d");
    const nn::Layer fc = nn::Dense{"fc", param("fc.weight", random_tensor({4, 7}, rng), nn::ParamKind::weight),
                                   param("fc.bias", random_tensor({4}, rng), nn::ParamKind::bias)};
    note(nn::gradient_check(fc, random_tensor({7}, rng), limits::kGradEps, rng).max_relative_error, "dense");

    Tensor off({2, 3, 3});
    for (auto& v : off.values()) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.01, 1.0);
    note(nn::gradient_check(nn::Relu{"relu"}, off, limits::kGradEps, rng).max_relative_error, "relu");
    note(nn::gradient_check(nn::MaxPool2x2{"pool"}, random_tensor({2, 4, 4}, rng), limits::kGradEps, rng)
             .max_relative_error,
         "maxpool2x2");
    note(nn::gradient_check(nn::Flatten{"flat"}, random_tensor({2, 2, 3}, rng), limits::kGradEps, rng)
             .max_relative_error,
         "flatten");

    // Softmax head with cross entropy, differentiated through the logits.
    const std::size_t C = 6;
    auto z = random_tensor({C}, rng, -3, 3);
    const int target = static_cast<int>(rng.below(C));
    const auto g = nn::softmax_cross_entropy_grad(nn::softmax(z), target);
    for (std::size_t i = 0; i < C; ++i) {
      const double keep = z[i];
      z[i] = keep + limits::kGradEps;
      const double up = nn::cross_entropy(nn::softmax(z), target);
      z[i] = keep - limits::kGradEps;
      const double down = nn::cross_entropy(nn::softmax(z), target);
      z[i] = keep;
      note(nn::gradient_error(g[i], (up - down) / (2 * limits::kGradEps)), "softmax_cross_entropy");
    }

    // Detector loss on a 2x2 grid with two boxes per cell.
    const models::DetectorConfig cfg{2, 2, 3};
    dataset::YoloAnnotation a{static_cast<int>(rng.below(3)), 0, 0, rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)};
    a.cx = rng.uniform(a.w / 2, 1 - a.w / 2);
    a.cy = rng.uniform(a.h / 2, 1 - a.h / 2);
    const auto t = models::encode_targets(std::span(&a, 1), cfg);
    auto p = random_tensor(cfg.grid_shape(), rng);
    const auto dg = models::detector_loss_grad(p, t, cfg);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + limits::kGradEps;
      const double up = models::detector_loss(p, t, cfg).total;
      p[i] = keep - limits::kGradEps;
      const double down = models::detector_loss(p, t, cfg).total;
      p[i] = keep;
      note(nn::gradient_error(dg[i], (up - down) / (2 * limits::kGradEps)), "detector_loss");
    }
  }
  const double secs = seconds_since(t0);
  report(worst <= limits::kGradMaxError && secs < limits::kGradSeconds, "gradient-check",
         fmt("max error %.3e (%s) over %d seeds x 7 checks, %.2fs", worst, worst_where.empty() ? "-" : worst_where.c_str(),
             limits::kGradSeeds, secs));
}

// ---------------------------------------------------------------------------

struct Prepared {
  TempDir dir;
  dataset::DatasetManifest manifest;
  harness::TrainData data;
};

Prepared synthetic_task(int classes, int per_class, std::uint64_t seed) {
  Prepared p;
  dataset::SyntheticDatasetSpec spec;
  spec.classes = classes;
  spec.per_class = per_class;
  spec.seed = seed;
  p.manifest = dataset::write_synthetic_dataset(p.dir.path(), spec);
  dataset::assign_split(p.manifest, limits::kSplitFraction, limits::kSplitSeed);
  p.data = harness::load_train_data(p.manifest, harness::TrainConfig{});
  return p;
}

int epochs_or_never(const harness::TrainResult& r, int max_epochs) {
  return r.reached_target_epoch ? *r.reached_target_epoch : max_epochs + 1;
}

void gate_classifier(const Prepared& six, models::Network& trained) {
  // Plain defaults: no early stop, so the whole loss curve is logged.
  const harness::TrainConfig cfg;
  const auto t0 = Clock::now();
  const auto r = harness::train(models::build_classifier(limits::kClassifierClasses, harness::kClassifierSide, cfg.seed),
                                six.data, cfg);
  const double secs = seconds_since(t0);
  int first_hit = 0;
  for (const auto& row : r.log.rows)
    if (row.val_accuracy >= limits::kClassifierTargetAcc) {
      first_hit = row.epoch;
      break;
    }
  const bool reached = first_hit > 0 && first_hit <= limits::kClassifierMaxEpochs;
  const bool falling = r.log.rows.size() >= 5 && r.log.rows[4].train_loss < r.log.rows[0].train_loss;
  report(reached && secs < limits::kClassifierSeconds && falling, "classifier",
         fmt("%zu train / %zu val, %d epochs: val acc first >= %.2f at epoch %d, final %.4f, %.1fs; train loss "
             "epoch 1 %.4f, epoch 5 %s",
             six.data.train.size(), six.data.val.size(), cfg.epochs, limits::kClassifierTargetAcc, first_hit,
             r.log.rows.empty() ? 0.0 : r.log.rows.back().val_accuracy, secs,
             r.log.rows.empty() ? 0.0 : r.log.rows[0].train_loss,
             r.log.rows.size() >= 5 ? fmt("%.4f", r.log.rows[4].train_loss).c_str() : "n/a"));
  trained = r.network;

  // Single end-to-end sample through the cnn pipeline, recorded for reference.
  dataset::SyntheticGestureSpec spec;
  spec.finger_count = 3;
  const harness::Recognizer rec = harness::CnnPipeline{trained, dataset::gesture_class_names(6)};
  const auto out = harness::infer(rec, dataset::gen_synthetic(spec, 314159).image);
  std::printf("info  %-22s three-finger sample -> \"%s\" (%.3f)\n", "cnn-pipeline", out.label.c_str(), out.confidence);
}

void gate_feature_store() {
  std::vector<models::FeatureStore::Entry> raw;
  const auto names = dataset::gesture_class_names(6);
  for (int k = 0; k < 6; ++k) {
    models::FeatureStore::Entry e{names[static_cast<std::size_t>(k)], k + 1, {}};
    for (const auto& s : dataset::gen_synthetic_class(k, limits::kEnrolledPerGesture, 42))
      e.vectors.push_back(models::extract_gesture_features(s.image));
    raw.push_back(std::move(e));
  }
  const auto store = models::FeatureStore::build(std::move(raw));
  int hits = 0, total = 0;
  for (int k = 0; k < 6; ++k)
    for (const auto& s : dataset::gen_synthetic_class(k, limits::kQueriesPerGesture, 4242)) {
      ++total;
      try {
        hits += models::nearest_match(store, models::extract_gesture_features(s.image)).id == k + 1;
      } catch (const NoHandRegion&) {
      }
    }
  const double acc = static_cast<double>(hits) / total;
  report(acc >= limits::kFeatureStoreAcc, "feature-store",
         fmt("%d enrolled + %d fresh queries per gesture: accuracy %.4f (%d/%d), need %.2f",
             limits::kEnrolledPerGesture, limits::kQueriesPerGesture, acc, hits, total, limits::kFeatureStoreAcc));
}

void gate_transfer(const Prepared& six) {
  const auto three = synthetic_task(3, limits::kClassifierPerClass, 7);
  harness::TrainConfig pre;
  pre.epochs = 100;
  pre.target_val_accuracy = 0.95;
  const auto backbone = harness::train(models::build_classifier(3, harness::kClassifierSide, 7), three.data, pre);

  harness::TrainConfig cfg;
  cfg.epochs = limits::kClassifierMaxEpochs;
  cfg.target_val_accuracy = limits::kTransferTargetAcc;

  auto head = models::build_classifier(6, harness::kClassifierSide, cfg.seed);
  models::copy_matching_parameters(backbone.network, head);
  auto fine_cfg = cfg;
  fine_cfg.mode = harness::TrainMode::finetune;  // conv layers frozen
  const auto fine = harness::train(head, six.data, fine_cfg);
  const auto scratch = harness::train(models::build_classifier(6, harness::kClassifierSide, cfg.seed), six.data, cfg);

  const int e_fine = epochs_or_never(fine, cfg.epochs), e_scratch = epochs_or_never(scratch, cfg.epochs);
  report(fine.reached_target_epoch && e_fine <= e_scratch, "transfer",
         fmt("epochs to %.2f val acc: fine-tuned %d, from scratch %d (pretrain reached %.4f at epoch %d)",
             limits::kTransferTargetAcc, e_fine, e_scratch, backbone.log.rows.back().val_accuracy,
             static_cast<int>(backbone.log.rows.size())));
}

// ---------------------------------------------------------------------------

void gate_iou() {
  Rng rng(555);
  const int n = limits::kIouRaster;
  auto random_box = [&] {
    const int x0 = static_cast<int>(rng.below(n - 1)), y0 = static_cast<int>(rng.below(n - 1));
    const int w = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - x0)));
    const int h = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - y0)));
    return std::array<int, 4>{x0, y0, w, h};
  };
  // Counts unit pixels of an n x n raster covered by each box.
  auto raster = [&](const std::array<int, 4>& a, const std::array<int, 4>& b) {
    long inter = 0, uni = 0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const bool ia = x >= a[0] && x < a[0] + a[2] && y >= a[1] && y < a[1] + a[3];
        const bool ib = x >= b[0] && x < b[0] + b[2] && y >= b[1] && y < b[1] + b[3];
        inter += ia && ib;
        uni += ia || ib;
      }
    return static_cast<double>(inter) / static_cast<double>(uni);
  };
  auto norm = [&](const std::array<int, 4>& a) {
    return models::NormBox{(a[0] + a[2] / 2.0) / n, (a[1] + a[3] / 2.0) / n, static_cast<double>(a[2]) / n,
                           static_cast<double>(a[3]) / n};
  };
  double worst = 0.0;
  int overlapping = 0;
  for (int i = 0; i < limits::kIouPairs; ++i) {
    auto a = random_box(), b = random_box();
    if (i % 2) b = {std::max(0, a[0] - 3), std::max(0, a[1] - 2), std::min(a[2] + 5, n - std::max(0, a[0] - 3)), a[3]};
    const double want = raster(a, b);
    overlapping += want > 0;
    worst = std::max(worst, std::abs(models::iou(norm(a), norm(b)) - want));
  }
  report(worst <= limits::kIouMaxDelta, "iou-oracle",
         fmt("%d pairs (%d overlapping) vs %dx%d raster: max |delta| %.3e", limits::kIouPairs, overlapping, n, n, worst));
}

void gate_grid_roundtrip() {
  double worst = 0.0;
  int checked = 0, missing = 0;
  for (int S : {1, 3, 7}) {
    const models::DetectorConfig cfg{S, 1, 6};
    for (int i = 0; i < limits::kLattice; ++i)
      for (int j = 0; j < limits::kLattice; ++j) {
        const double cx = (j + 0.5) / limits::kLattice, cy = (i + 0.5) / limits::kLattice;
        const double w = 0.04 + 0.002 * ((i * 7 + j) % 5), h = 0.04 + 0.002 * ((i + 3 * j) % 5);
        const dataset::YoloAnnotation a{(i + j) % 6, cx, cy, w, h};
        const auto back = models::decode_targets(models::encode_targets(std::span(&a, 1), cfg), cfg);
        ++checked;
        if (back.size() != 1 || back[0].class_id != a.class_id) {
          ++missing;
          continue;
        }
        for (double d : {back[0].cx - cx, back[0].cy - cy, back[0].w - w, back[0].h - h})
          worst = std::max(worst, std::abs(d));
      }
  }
  report(missing == 0 && worst <= limits::kGridMaxDelta, "grid-roundtrip",
         fmt("%d boxes on a %dx%d lattice, S in {1,3,7}: max |delta| %.3e, lost %d", checked, limits::kLattice,
             limits::kLattice, worst, missing));
}

void gate_formats() {
  Rng rng(808);
  // YOLO text at 6 decimals.
  std::vector<dataset::YoloAnnotation> anns;
  while (anns.size() < 1000) {
    auto r6 = [](double v) { return std::round(v * 1e6) / 1e6; };
    dataset::YoloAnnotation a{static_cast<int>(rng.below(50)), 0, 0, r6(rng.uniform(0.001, 1.0)), r6(rng.uniform(0.001, 1.0))};
    a.cx = r6(rng.uniform(a.w / 2, 1 - a.w / 2));
    a.cy = r6(rng.uniform(a.h / 2, 1 - a.h / 2));
    if (!dataset::check_annotation(a)) anns.push_back(a);
  }
  const bool yolo_ok = dataset::parse_yolo(dataset::write_yolo(anns)) == anns;

  // VOC pixel box -> YOLO -> pixel box.
  int voc_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const int w = 1 + static_cast<int>(rng.below(1024)), h = 1 + static_cast<int>(rng.below(1024));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
    const int x1 = x0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w - x0)));
    const int y1 = y0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h - y0)));
    const imaging::PixelBox box{x0, y0, x1, y1};
    voc_bad += !(dataset::yolo_to_pixel_box(dataset::voc_to_yolo(box, 0, w, h), w, h) == box);
  }

  // Checkpoint file round trip.
  TempDir dir;
  const auto net = models::build_detector(3, 2, 6, 96, 17);
  models::save_checkpoint(net, 99, dir.path() / "a.ckpt");
  const auto loaded = models::load_checkpoint(dir.path() / "a.ckpt");
  const bool ckpt_ok = models::serialize_checkpoint(loaded.network, loaded.step) == models::serialize_checkpoint(net, 99);

  // 216-item split.
  std::vector<std::string> ids;
  for (int i = 0; i < 216; ++i) ids.push_back(fmt("img%03d", i));
  const auto split = dataset::split_dataset(ids, 0.8, 42);
  const bool split_ok = split.train.size() == 173 && split.val.size() == 43;

  report(yolo_ok && voc_bad == 0 && ckpt_ok && split_ok, "format-fidelity",
         fmt("yolo 1000 records %s; voc inversion %d/10000 mismatches; checkpoint %s; 216 -> %zu/%zu",
             yolo_ok ? "exact" : "DIFFER", voc_bad, ckpt_ok ? "bit-exact" : "DIFFER", split.train.size(),
             split.val.size()));
}

void gate_determinism(const Prepared& six) {
  harness::TrainConfig cfg;
  cfg.epochs = 3;
  const auto init = models::build_classifier(6, harness::kClassifierSide, cfg.seed);
  const auto a = harness::train(init, six.data, cfg);
  const auto b = harness::train(init, six.data, cfg);
  const auto bytes_a = models::serialize_checkpoint(a.network, a.steps);
  const bool same = bytes_a == models::serialize_checkpoint(b.network, b.steps);

  TempDir dir;
  auto cut = cfg;
  cut.checkpoint_dir = dir.path();
  cut.stop_after_steps = a.steps / 2 + 1;  // lands mid-epoch
  const auto part = harness::train(init, six.data, cut);
  const auto latest = harness::latest_checkpoint(dir.path());
  bool resumed_same = false;
  if (part.interrupted && latest) {
    const auto rest = harness::resume(models::load_checkpoint(*latest), six.data, cfg);
    resumed_same = models::serialize_checkpoint(rest.network, rest.steps) == bytes_a;
  }
  report(same && resumed_same, "determinism",
         fmt("repeat run %s; interrupted at step %llu of %llu and resumed: %s", same ? "bit-identical" : "DIFFERS",
             static_cast<unsigned long long>(part.steps), static_cast<unsigned long long>(a.steps),
             resumed_same ? "bit-identical" : "DIFFERS"));
}

// ---------------------------------------------------------------------------

double box_iou(const imaging::PixelBox& a, const imaging::PixelBox& b) {
  const int iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min) + 1;
  const int ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min) + 1;
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = static_cast<double>(iw) * ih;
  return inter / (static_cast<double>(a.width()) * a.height() + static_cast<double>(b.width()) * b.height() - inter);
}

void gate_segmentation() {
  int hits = 0;
  double lowest = 1.0;
  for (int i = 0; i < limits::kSegImages; ++i) {
    dataset::SyntheticGestureSpec spec;
    spec.finger_count = i % 6;
    spec.background = static_cast<dataset::BackgroundStyle>(i % dataset::kBackgroundStyles);
    const auto s = dataset::gen_synthetic(spec, 9000 + static_cast<std::uint64_t>(i));
    double v = 0.0;
    try {
      v = box_iou(models::segment_hand(s.image).box, s.box);
    } catch (const NoHandRegion&) {
    }
    lowest = std::min(lowest, v);
    hits += v >= limits::kSegIou;
  }
  report(hits >= limits::kSegMinHits, "segmentation",
         fmt("%d/%d images with box IoU >= %.2f (need %d), lowest %.3f", hits, limits::kSegImages, limits::kSegIou,
             limits::kSegMinHits, lowest));
}

void gate_stream() {
  TempDir dir;
  for (int i = 0; i < limits::kStreamFrames; ++i) {
    dataset::SyntheticGestureSpec spec;
    spec.finger_count = i % 6;
    spec.background = static_cast<dataset::BackgroundStyle>(i % dataset::kBackgroundStyles);
    imaging::write_png(dir.path() / fmt("frame%04d.png", i), dataset::gen_synthetic(spec, 700 + static_cast<std::uint64_t>(i)).image);
  }
  const harness::Recognizer rec = harness::DetectorPipeline{models::build_detector(3, 2, 6, harness::kDetectorSide, 1),
                                                            {3, 2, 6}, dataset::gesture_class_names(6)};
  double worst = 0.0, sum = 0.0;
  int errors = 0;
  const auto n = harness::run_stream(rec, dir.path(), [&](const harness::FrameRecord& r) {
    worst = std::max(worst, r.elapsed_ms);
    sum += r.elapsed_ms;
    errors += !r.result.has_value();
  });
  report(n == limits::kStreamFrames && errors == 0 && worst <= limits::kStreamMaxMs, "stream-throughput",
         fmt("%zu 96x96 frames through the detector: mean %.2f ms, max %.2f ms (budget %.0f ms)", n,
             n ? sum / static_cast<double>(n) : 0.0, worst, limits::kStreamMaxMs));
}

}  // namespace

int main() {
  std::printf("kernels: %s\n", std::string(kernels::name(kernels::active().backend)).c_str());
  const auto t0 = Clock::now();
  const auto run = [](const char* gate, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      report(false, gate, std::string("threw: ") + e.what());
    }
  };
  run("gradient-check", gate_gradients);
  {
    const auto six = synthetic_task(limits::kClassifierClasses, limits::kClassifierPerClass, 42);
    models::Network trained;
    run("classifier", [&] { gate_classifier(six, trained); });
    run("feature-store", gate_feature_store);
    run("transfer", [&] { gate_transfer(six); });
    run("determinism", [&] { gate_determinism(six); });
  }
  run("iou-oracle", gate_iou);
  run("grid-roundtrip", gate_grid_roundtrip);
  run("format-fidelity", gate_formats);
  run("segmentation", gate_segmentation);
  run("stream-throughput", gate_stream);
  std::printf("%d gate(s) failed, %.1fs total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
