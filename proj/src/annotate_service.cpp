// SPDX-License-Identifier: Apache-2.0
#include "gesture/annotate_service.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <mutex>
#include <nlohmann/json.hpp>

#include "gesture/error.hpp"
#include "gesture/png_io.hpp"

namespace gesture::service {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool valid_id(std::string_view id) {
  if (id.empty() || id.front() == '/' || id.back() == '/') return false;
  if (id.find('\\') != std::string_view::npos || id.find('\0') != std::string_view::npos) return false;
  std::size_t pos = 0;
  while (pos <= id.size()) {
    auto end = id.find('/', pos);
    if (end == std::string_view::npos) end = id.size();
    const auto seg = id.substr(pos, end - pos);
    if (seg.empty() || seg == "." || seg == "..") return false;
    pos = end + 1;
  }
  return true;
}

fs::path sidecar_of(const fs::path& png) {
  auto p = png;
  p.replace_extension(".txt");
  return p;
}

}  // namespace

AnnotationStore::AnnotationStore(fs::path root, dataset::LabelMap labels)
    : root_(std::move(root)), labels_(std::move(labels)) {
  std::error_code ec;
  if (!fs::is_directory(root_, ec)) throw DataError("dataset root is not a readable directory: " + root_.string());
  fs::directory_iterator probe(root_, ec);
  if (ec) throw DataError("cannot read dataset root " + root_.string() + ": " + ec.message());
}

std::vector<ImageEntry> AnnotationStore::list_images() const {
  std::vector<ImageEntry> out;
  for (const auto& entry : fs::recursive_directory_iterator(root_, fs::directory_options::skip_permission_denied)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    if (ext != ".png") continue;
    ImageEntry e;
    auto rel = fs::relative(entry.path(), root_);
    rel.replace_extension();
    e.id = rel.generic_string();
    try {
      std::tie(e.width, e.height) = imaging::png_dimensions(entry.path());
    } catch (const std::exception& ex) {
      e.warning = ex.what();
    }
    const auto txt = sidecar_of(entry.path());
    std::error_code ec;
    if (fs::is_regular_file(txt, ec)) {
      try {
        dataset::read_yolo_file(txt);
        e.annotated = true;
      } catch (const std::exception& ex) {
        e.warning = std::string("sidecar does not parse: ") + ex.what();
      }
    }
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const ImageEntry& a, const ImageEntry& b) { return a.id < b.id; });
  return out;
}

std::optional<fs::path> AnnotationStore::image_path(std::string_view id) const {
  if (!valid_id(id)) return std::nullopt;
  fs::path p = root_ / fs::path(std::string(id) + ".png");
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) return std::nullopt;
  return p;
}

std::optional<AnnotationRecord> AnnotationStore::get_annotation(std::string_view id) const {
  const auto png = image_path(id);
  if (!png) return std::nullopt;
  AnnotationRecord rec;
  rec.image_id = std::string(id);
  std::tie(rec.width, rec.height) = imaging::png_dimensions(*png);
  const auto txt = sidecar_of(*png);
  std::error_code ec;
  if (fs::is_regular_file(txt, ec)) {
    rec.boxes = dataset::read_yolo_file(txt);
    for (auto& b : rec.boxes) b.class_id += 1;
  }
  return rec;
}

PutStatus AnnotationStore::put_annotation(std::string_view id, const std::vector<dataset::YoloAnnotation>& boxes) const {
  const auto png = image_path(id);
  if (!png) return {PutStatus::Code::not_found, "", "unknown image"};
  std::vector<dataset::YoloAnnotation> yolo;
  yolo.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const std::string prefix = "boxes[" + std::to_string(i) + "].";
    const bool known = std::any_of(labels_.entries.begin(), labels_.entries.end(),
                                   [&](const dataset::LabelEntry& e) { return e.id == b.class_id; });
    if (!known) return {PutStatus::Code::invalid, prefix + "class_id", "not in the label map"};
    auto y = b;
    y.class_id -= 1;
    if (auto err = dataset::check_annotation(y)) return {PutStatus::Code::invalid, prefix + err->field, err->message};
    yolo.push_back(y);
  }
  dataset::write_yolo_file(sidecar_of(*png), yolo);
  return {};
}

dataset::LabelMap dataset_label_map(const fs::path& root) {
  const auto file = root / "label_map.pbtxt";
  std::error_code ec;
  if (fs::is_regular_file(file, ec)) return dataset::read_label_map(file);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return dataset::build_label_map(names);
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kPlaceholderPage =
    "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>Gesture annotation</title></head>\n"
    "<body><h1>Gesture annotation service</h1>\n"
    "<p>No UI bundle configured. API: <a href=\"/api/images\">/api/images</a>, "
    "<a href=\"/api/labelmap\">/api/labelmap</a>.</p></body></html>\n";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  send_json(res, status, body);
}

json record_json(const AnnotationRecord& rec) {
  json boxes = json::array();
  for (const auto& b : rec.boxes)
    boxes.push_back({{"class_id", b.class_id}, {"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}});
  return {{"id", rec.image_id}, {"width", rec.width}, {"height", rec.height}, {"boxes", boxes}};
}

/// Parses a PUT body; on failure fills field/message and returns nullopt.
std::optional<std::vector<dataset::YoloAnnotation>> parse_boxes(const std::string& body, std::string& field,
                                                                std::string& message) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    field = "body";
    message = "invalid JSON";
    return std::nullopt;
  }
  if (!doc.is_object() || !doc.contains("boxes") || !doc["boxes"].is_array()) {
    field = "boxes";
    message = "must be an array";
    return std::nullopt;
  }
  std::vector<dataset::YoloAnnotation> out;
  const auto& arr = doc["boxes"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& b = arr[i];
    const std::string prefix = "boxes[" + std::to_string(i) + "]";
    if (!b.is_object()) {
      field = prefix;
      message = "must be an object";
      return std::nullopt;
    }
    dataset::YoloAnnotation a;
    if (!b.contains("class_id") || !b["class_id"].is_number_integer()) {
      field = prefix + ".class_id";
      message = "must be an integer";
      return std::nullopt;
    }
    a.class_id = b["class_id"].get<int>();
    for (auto [key, dst] : {std::pair{"cx", &a.cx}, {"cy", &a.cy}, {"w", &a.w}, {"h", &a.h}}) {
      if (!b.contains(key) || !b[key].is_number()) {
        field = prefix + "." + key;
        message = "must be a number";
        return std::nullopt;
      }
      *dst = b[key].get<double>();
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace

struct AnnotateServer::Impl {
  AnnotationStore store;
  fs::path ui_dir;
  httplib::Server server;
  std::mutex state_mutex;
  bool listening = false;
  bool stop_requested = false;

  Impl(AnnotationStore s, fs::path ui) : store(std::move(s)), ui_dir(std::move(ui)) { routes(); }

  void routes() {
    server.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& e : store.list_images()) {
        json j{{"id", e.id}, {"width", e.width}, {"height", e.height}, {"annotated", e.annotated}};
        if (!e.warning.empty()) j["warning"] = e.warning;
        out.push_back(std::move(j));
      }
      send_json(res, 200, out);
    });

    server.Get(R"(/api/images/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto path = store.image_path(req.matches[1].str());
      if (!path) return send_error(res, 404, "unknown image");
      std::ifstream in(*path, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      res.status = 200;
      res.set_content(ss.str(), "image/png");
    });

    server.Get(R"(/api/annotations/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto rec = store.get_annotation(req.matches[1].str());
        if (!rec) return send_error(res, 404, "unknown image");
        send_json(res, 200, record_json(*rec));
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Put(R"(/api/annotations/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1].str();
      if (!store.image_path(id)) return send_error(res, 404, "unknown image");
      std::string field, message;
      const auto boxes = parse_boxes(req.body, field, message);
      if (!boxes) return send_error(res, 400, field + " " + message, field);
      try {
        const auto st = store.put_annotation(id, *boxes);
        switch (st.code) {
          case PutStatus::Code::ok: res.status = 204; return;
          case PutStatus::Code::not_found: return send_error(res, 404, "unknown image");
          case PutStatus::Code::invalid: return send_error(res, 400, st.field + " " + st.message, st.field);
        }
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Get("/api/labelmap", [this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& e : store.labels().entries) out.push_back({{"id", e.id}, {"name", e.name}});
      send_json(res, 200, out);
    });

    if (!ui_dir.empty() && fs::is_directory(ui_dir)) {
      server.set_mount_point("/", ui_dir.string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kPlaceholderPage, "text/html");
      });
    }
  }
};

AnnotateServer::AnnotateServer(AnnotationStore store, fs::path ui_dir)
    : impl_(std::make_unique<Impl>(std::move(store), std::move(ui_dir))) {}

AnnotateServer::~AnnotateServer() { stop(); }

int AnnotateServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw DataError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw DataError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void AnnotateServer::listen() {
  {
    std::lock_guard lock(impl_->state_mutex);
    if (impl_->stop_requested) return;
    impl_->listening = true;
  }
  impl_->server.listen_after_bind();
}

// httplib ignores stop() until the accept loop is running, so a stop racing
// a just-started listen() waits for it first.
void AnnotateServer::stop() {
  if (!impl_) return;
  std::lock_guard lock(impl_->state_mutex);
  impl_->stop_requested = true;
  if (!impl_->listening) return;
  impl_->server.wait_until_ready();
  impl_->server.stop();
}

}  // namespace gesture::service
