// SPDX-License-Identifier: Apache-2.0
// gesture: command-line front end for dataset preparation, training,
// evaluation, inference and the annotation service.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gesture/annotate_service.hpp"
#include "gesture/annotation.hpp"
#include "gesture/checkpoint.hpp"
#include "gesture/curves.hpp"
#include "gesture/dataset.hpp"
#include "gesture/error.hpp"
#include "gesture/features.hpp"
#include "gesture/inference.hpp"
#include "gesture/network.hpp"
#include "gesture/png_io.hpp"
#include "gesture/synthetic.hpp"
#include "gesture/training.hpp"

namespace fs = std::filesystem;
using namespace gesture;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path manifest_path(const fs::path& dataset) { return dataset / "manifest.tsv"; }

dataset::DatasetManifest open_dataset(const fs::path& dir) {
  const auto m = manifest_path(dir);
  if (fs::is_regular_file(m)) return dataset::load_manifest(m);
  return dataset::ingest_directory(dir);
}

dataset::LabelMap labels_for(const fs::path& dataset_dir, const dataset::DatasetManifest& manifest) {
  const auto file = dataset_dir / "label_map.pbtxt";
  if (fs::is_regular_file(file)) return dataset::read_label_map(file);
  return dataset::build_label_map(manifest.class_names());
}

std::vector<std::string> names_of(const dataset::LabelMap& map) {
  std::vector<std::string> out;
  for (const auto& e : map.entries) out.push_back(e.name);
  return out;
}

/// Label map next to a checkpoint, else --labels, else the built-in names.
std::vector<std::string> class_names_for(const fs::path& checkpoint, const std::string& labels_opt, std::size_t n) {
  fs::path file = labels_opt.empty() ? checkpoint.parent_path() / "label_map.pbtxt" : fs::path(labels_opt);
  if (fs::is_regular_file(file)) return names_of(dataset::read_label_map(file));
  if (!labels_opt.empty()) throw DataError("cannot read label map " + labels_opt);
  if (n >= 1 && n <= 6) return dataset::gesture_class_names(static_cast<int>(n));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::to_string(i));
  return out;
}

std::string box_text(const std::optional<imaging::PixelBox>& b) {
  if (!b) return "-";
  return std::to_string(b->x_min) + "," + std::to_string(b->y_min) + "," + std::to_string(b->x_max) + "," +
         std::to_string(b->y_max);
}

struct RecognizerOptions {
  std::string pipeline = "cnn";
  std::string checkpoint;
  std::string store;
  std::string labels;
  int grid = 3;
  int boxes = 1;
  double threshold = 0.25;
};

void add_recognizer_options(CLI::App* cmd, RecognizerOptions& o) {
  cmd->add_option("--pipeline", o.pipeline, "cnn | features | detector")
      ->check(CLI::IsMember({"cnn", "features", "detector"}));
  cmd->add_option("--checkpoint", o.checkpoint, "Network checkpoint (cnn, detector)");
  cmd->add_option("--store", o.store, "Feature store directory (features)");
  cmd->add_option("--labels", o.labels, "Label map (default: label_map.pbtxt beside the checkpoint)");
  cmd->add_option("--grid", o.grid, "Detector grid side S")->check(CLI::PositiveNumber);
  cmd->add_option("--boxes", o.boxes, "Detector boxes per cell B")->check(CLI::PositiveNumber);
  cmd->add_option("--threshold", o.threshold, "Detector score threshold");
}

harness::Recognizer make_recognizer(const RecognizerOptions& o) {
  if (o.pipeline == "features") {
    if (o.store.empty()) throw UsageError("--store is required for the features pipeline");
    return harness::FeaturePipeline{models::FeatureStore::load(o.store)};
  }
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required for the " + o.pipeline + " pipeline");
  auto ck = models::load_checkpoint(o.checkpoint);
  const auto outputs = element_count(ck.network.output_shape());
  if (o.pipeline == "cnn") {
    if (ck.network.head() != models::Head::softmax) throw DataError("checkpoint is not a classifier");
    return harness::CnnPipeline{std::move(ck.network), class_names_for(o.checkpoint, o.labels, outputs)};
  }
  harness::DetectorPipeline p;
  p.cfg.S = o.grid;
  p.cfg.B = o.boxes;
  const auto cells = static_cast<std::size_t>(o.grid) * static_cast<std::size_t>(o.grid);
  if (outputs % cells != 0 || outputs / cells <= static_cast<std::size_t>(5 * o.boxes))
    throw DataError("checkpoint output size " + std::to_string(outputs) + " does not fit a " + std::to_string(o.grid) +
                    "x" + std::to_string(o.grid) + " grid");
  p.cfg.C = static_cast<int>(outputs / cells) - 5 * o.boxes;
  p.class_names = class_names_for(o.checkpoint, o.labels, static_cast<std::size_t>(p.cfg.C));
  p.net = std::move(ck.network);
  p.score_threshold = o.threshold;
  return p;
}

void print_result(const harness::InferenceResult& r) {
  if (!r.detected) {
    std::cout << "no hand detected\n";
    return;
  }
  std::printf("label %s\nclass %d\nconfidence %.6f\nbox %s\n", r.label.c_str(), r.class_id, r.confidence,
              box_text(r.box).c_str());
}

service::AnnotateServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hand-gesture digit recognition toolkit"};
  app.require_subcommand(1);

  // gen
  dataset::SyntheticDatasetSpec gen_spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic gesture dataset");
  gen->add_option("--classes", gen_spec.classes, "Number of gesture classes (1-6)")->check(CLI::Range(1, 6));
  gen->add_option("--per-class", gen_spec.per_class, "Images per class")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_spec.seed, "Generator seed");
  gen->add_option("--canvas", gen_spec.canvas, "Image side in pixels")->check(CLI::Range(32, 1024));

  // split
  std::string split_dataset_dir;
  double split_fraction = 0.8;
  std::uint64_t split_seed = 42;
  auto* split = app.add_subcommand("split", "Assign a seeded train/validation split and write manifest.tsv");
  split->add_option("--dataset", split_dataset_dir, "Dataset directory")->required();
  split->add_option("--fraction", split_fraction, "Training fraction")->check(CLI::Range(0.0, 1.0));
  split->add_option("--seed", split_seed, "Split seed");

  // labelmap
  std::string lm_names, lm_out;
  auto* labelmap = app.add_subcommand("labelmap", "Write a label map from comma-separated class names");
  labelmap->add_option("--names", lm_names, "Class names in id order, comma-separated")->required();
  labelmap->add_option("--out", lm_out, "Output file (default: stdout)");

  // train
  harness::TrainConfig tcfg;
  std::string train_dataset, train_mode = "classifier", train_init, train_resume, train_log;
  std::string train_ckdir = "checkpoints";
  std::uint64_t train_init_seed = 7;
  auto* trn = app.add_subcommand("train", "Train a classifier, detector or fine-tuned head");
  trn->add_option("--dataset", train_dataset, "Dataset directory with a split manifest")->required();
  trn->add_option("--mode", train_mode, "classifier | detector | finetune")
      ->check(CLI::IsMember({"classifier", "detector", "finetune"}));
  trn->add_option("--epochs", tcfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  trn->add_option("--batch", tcfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  trn->add_option("--lr", tcfg.learning_rate, "Learning rate")->check(CLI::NonNegativeNumber);
  trn->add_option("--lambda", tcfg.weight_decay, "L2 weight decay")->check(CLI::NonNegativeNumber);
  trn->add_option("--clip", tcfg.max_grad_norm, "Max batch gradient norm (0 disables)")->check(CLI::NonNegativeNumber);
  trn->add_option("--seed", tcfg.seed, "Shuffle seed");
  trn->add_option("--init-seed", train_init_seed, "Parameter initialisation seed");
  trn->add_option("--grid", tcfg.detector.S, "Detector grid side S")->check(CLI::PositiveNumber);
  trn->add_option("--boxes", tcfg.detector.B, "Detector boxes per cell B")->check(CLI::PositiveNumber);
  trn->add_option("--checkpoint-dir", train_ckdir, "Checkpoint directory");
  trn->add_option("--checkpoint-every", tcfg.checkpoint_every, "Checkpoint period in steps (0: only at the end)");
  trn->add_option("--init", train_init, "Pretrained checkpoint for finetune mode");
  trn->add_option("--resume", train_resume, "Checkpoint with training state to continue from");
  trn->add_option("--log", train_log, "Metrics CSV (default: <checkpoint-dir>/metrics.csv)");

  // eval
  std::string eval_dataset, eval_ckpt, eval_split = "val";
  harness::EvalConfig ecfg;
  int eval_grid = 3, eval_boxes = 1;
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  evl->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  evl->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required();
  evl->add_option("--max-steps", ecfg.max_steps, "Evaluation cap")->check(CLI::PositiveNumber);
  evl->add_option("--split", eval_split, "val | train | all")->check(CLI::IsMember({"val", "train", "all"}));
  evl->add_option("--grid", eval_grid, "Detector grid side S")->check(CLI::PositiveNumber);
  evl->add_option("--boxes", eval_boxes, "Detector boxes per cell B")->check(CLI::PositiveNumber);

  // enroll
  std::string enroll_dataset, enroll_out;
  auto* enroll = app.add_subcommand("enroll", "Build a feature store from a dataset's training split");
  enroll->add_option("--dataset", enroll_dataset, "Dataset directory")->required();
  enroll->add_option("--out", enroll_out, "Feature store directory")->required();

  // infer
  RecognizerOptions infer_opts;
  std::string infer_image;
  auto* inf = app.add_subcommand("infer", "Recognise the gesture in one image");
  add_recognizer_options(inf, infer_opts);
  inf->add_option("--image", infer_image, "PNG image")->required();

  // stream
  RecognizerOptions stream_opts;
  stream_opts.pipeline = "detector";
  std::string stream_dir;
  auto* strm = app.add_subcommand("stream", "Run recognition over a directory of frames");
  add_recognizer_options(strm, stream_opts);
  strm->add_option("--frames-dir", stream_dir, "Directory of PNG frames")->required();

  // curves
  std::string curves_log, curves_svg_out, curves_csv_out;
  auto* crv = app.add_subcommand("curves", "Export training curves");
  crv->add_option("--log", curves_log, "Metrics CSV written by train")->required();
  crv->add_option("--svg", curves_svg_out, "SVG output");
  crv->add_option("--csv", curves_csv_out, "CSV output");

  // serve
  std::string serve_dataset, serve_ui, serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* srv = app.add_subcommand("serve", "Serve the annotation API");
  srv->add_option("--dataset", serve_dataset, "Dataset root")->required();
  srv->add_option("--port", serve_port, "Port (0: any free port)")->check(CLI::Range(0, 65535));
  srv->add_option("--host", serve_host, "Bind address");
  srv->add_option("--ui-dir", serve_ui, "Static UI bundle directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      const auto m = dataset::write_synthetic_dataset(gen_out, gen_spec);
      std::cout << "wrote " << m.items.size() << " images in " << gen_spec.classes << " classes to " << gen_out
                << "\n";
    } else if (*split) {
      auto m = open_dataset(split_dataset_dir);
      for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
      dataset::assign_split(m, split_fraction, split_seed);
      dataset::save_manifest(manifest_path(split_dataset_dir), m);
      std::cout << "train " << m.subset(dataset::Split::train).size() << "\nval "
                << m.subset(dataset::Split::val).size() << "\n";
    } else if (*labelmap) {
      std::vector<std::string> names;
      std::string cur;
      for (char c : lm_names + ",") {
        if (c == ',') {
          if (!cur.empty()) names.push_back(cur);
          cur.clear();
        } else if (c != ' ') {
          cur += c;
        }
      }
      const auto map = dataset::build_label_map(names);
      if (lm_out.empty())
        std::cout << dataset::write_label_map(map);
      else
        dataset::write_label_map_file(lm_out, map);
    } else if (*trn) {
      tcfg.mode = harness::parse_train_mode(train_mode);
      tcfg.checkpoint_dir = train_ckdir;
      const auto manifest = open_dataset(train_dataset);
      const auto labels = labels_for(train_dataset, manifest);
      const int classes = static_cast<int>(labels.size());
      tcfg.detector.C = classes;
      const auto data = harness::load_train_data(manifest, tcfg, &labels);
      std::cout << "train " << data.train.size() << " val " << data.val.size() << "\n";

      harness::TrainResult result;
      if (!train_resume.empty()) {
        result = harness::resume(models::load_checkpoint(train_resume), data, tcfg);
      } else {
        models::Network net;
        switch (tcfg.mode) {
          case harness::TrainMode::classifier:
            net = models::build_classifier(classes, harness::kClassifierSide, train_init_seed);
            break;
          case harness::TrainMode::detector:
            net = models::build_detector(tcfg.detector.S, tcfg.detector.B, classes, harness::kDetectorSide,
                                         train_init_seed);
            break;
          case harness::TrainMode::finetune: {
            if (train_init.empty()) throw UsageError("--init is required for finetune mode");
            const auto pre = models::load_checkpoint(train_init);
            net = models::build_classifier(classes, harness::kClassifierSide, train_init_seed);
            const auto copied = models::copy_matching_parameters(pre.network, net);
            std::cout << "copied " << copied << " pretrained parameters\n";
            break;
          }
        }
        result = harness::train(std::move(net), data, tcfg);
      }
      fs::create_directories(train_ckdir);
      dataset::write_label_map_file(fs::path(train_ckdir) / "label_map.pbtxt", labels);
      const fs::path log_path = train_log.empty() ? fs::path(train_ckdir) / "metrics.csv" : fs::path(train_log);
      if (!result.log.empty()) harness::export_curves(result.log, log_path, harness::CurveFormat::csv);
      for (const auto& r : result.log.rows)
        std::printf("epoch %d train_loss %.6f val_loss %.6f train_acc %.4f val_acc %.4f\n", r.epoch, r.train_loss,
                    r.val_loss, r.train_accuracy, r.val_accuracy);
      std::cout << "steps " << result.steps << "\n";
      if (const auto latest = harness::latest_checkpoint(train_ckdir)) std::cout << "checkpoint " << latest->string() << "\n";
    } else if (*evl) {
      const auto manifest = open_dataset(eval_dataset);
      const auto labels = labels_for(eval_dataset, manifest);
      auto ck = models::load_checkpoint(eval_ckpt);
      harness::TrainConfig cfg;
      cfg.mode = ck.network.head() == models::Head::softmax ? harness::TrainMode::classifier
                                                            : harness::TrainMode::detector;
      cfg.detector.S = eval_grid;
      cfg.detector.B = eval_boxes;
      cfg.detector.C = static_cast<int>(labels.size());
      std::vector<dataset::ManifestItem> items;
      if (eval_split == "all")
        items = manifest.items;
      else
        items = manifest.subset(eval_split == "train" ? dataset::Split::train : dataset::Split::val);
      if (items.empty()) throw DataError("no items in split '" + eval_split + "'");
      const auto examples = harness::load_examples(items, cfg, labels);
      const auto r = harness::evaluate(ck.network, examples, cfg, ecfg);
      std::printf("evaluated %zu\naccuracy %.6f\nmean_loss %.6f\n", r.evaluated, r.accuracy, r.mean_loss);
      if (cfg.mode == harness::TrainMode::detector)
        std::printf("mean_iou %.6f\nlocalized %.6f\n", r.mean_iou, r.localized_rate);
      std::cout << "confusion (rows true, columns predicted)\n";
      for (const auto& row : r.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) std::cout << (j ? " " : "") << row[j];
        std::cout << "\n";
      }
    } else if (*enroll) {
      const auto manifest = open_dataset(enroll_dataset);
      const auto labels = labels_for(enroll_dataset, manifest);
      auto items = manifest.subset(dataset::Split::train);
      if (items.empty()) items = manifest.items;
      std::vector<models::FeatureStore::Entry> raw;
      for (const auto& e : labels.entries) raw.push_back({e.name, e.id, {}});
      std::size_t skipped = 0;
      for (const auto& it : items) {
        const auto id = labels.id_of(it.class_name);
        if (!id) throw DataError(it.image_path.string() + ": class '" + it.class_name + "' is not in the label map");
        try {
          raw[static_cast<std::size_t>(*id - 1)].vectors.push_back(
              models::extract_gesture_features(imaging::read_png(it.image_path)));
        } catch (const NoHandRegion&) {
          std::cerr << "warning: no hand region in " << it.image_path.string() << "\n";
          ++skipped;
        }
      }
      std::erase_if(raw, [](const models::FeatureStore::Entry& e) { return e.vectors.empty(); });
      const auto store = models::FeatureStore::build(std::move(raw));
      store.save(enroll_out);
      std::cout << "enrolled " << items.size() - skipped << " images into " << enroll_out << "\n";
    } else if (*inf) {
      const auto rec = make_recognizer(infer_opts);
      print_result(harness::infer_file(rec, infer_image));
    } else if (*strm) {
      const auto rec = make_recognizer(stream_opts);
      std::cout << "frame\tfile\tlabel\tconfidence\tbox\tms\n";
      harness::run_stream(rec, stream_dir, [](const harness::FrameRecord& f) {
        const std::string file = f.path.filename().string();
        if (!f.result) {
          std::printf("%zu\t%s\terror: %s\t-\t-\t%.3f\n", f.frame_index, file.c_str(), f.error.c_str(), f.elapsed_ms);
        } else if (!f.result->detected) {
          std::printf("%zu\t%s\t-\t0\t-\t%.3f\n", f.frame_index, file.c_str(), f.elapsed_ms);
        } else {
          std::printf("%zu\t%s\t%s\t%.6f\t%s\t%.3f\n", f.frame_index, file.c_str(), f.result->label.c_str(),
                      f.result->confidence, box_text(f.result->box).c_str(), f.elapsed_ms);
        }
        std::fflush(stdout);
      });
    } else if (*crv) {
      if (curves_svg_out.empty() && curves_csv_out.empty()) throw UsageError("give --svg and/or --csv");
      const auto log = harness::read_curves_csv(curves_log);
      if (!curves_svg_out.empty()) harness::export_curves(log, curves_svg_out, harness::CurveFormat::svg);
      if (!curves_csv_out.empty()) harness::export_curves(log, curves_csv_out, harness::CurveFormat::csv);
    } else if (*srv) {
      service::AnnotationStore store(serve_dataset, service::dataset_label_map(serve_dataset));
      service::AnnotateServer server(std::move(store), serve_ui);
      const int port = server.bind(serve_host, serve_port);
      std::cout << "listening on http://" << serve_host << ":" << port << "/\n" << std::flush;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
