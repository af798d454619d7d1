// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "gesture/annotate_service.hpp"
#include "gesture/error.hpp"
#include "gesture/png_io.hpp"
#include "gesture/synthetic.hpp"
#include "support.hpp"

using namespace gesture;
using namespace gesture::service;
using json = nlohmann::json;

namespace {

std::string file_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// A small synthetic dataset served on an ephemeral port.
struct Served {
  testing::TempDir dir;
  std::unique_ptr<AnnotateServer> server;
  std::thread thread;
  int port = 0;

  explicit Served(const std::filesystem::path& ui_dir = {}) {
    dataset::SyntheticDatasetSpec spec;
    spec.classes = 2;
    spec.per_class = 3;
    dataset::write_synthetic_dataset(dir.path(), spec);
    imaging::write_png(dir / "loose.png", imaging::ImageU8(10, 8, 3, 0));  // unannotated
    server = std::make_unique<AnnotateServer>(AnnotationStore(dir.path(), dataset_label_map(dir.path())), ui_dir);
    port = server->bind("127.0.0.1", 0);
    thread = std::thread([this] { server->listen(); });
  }
  ~Served() {
    server->stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_connection_timeout(5);
    return c;
  }
  std::string first_id(const std::string& cls) const {
    auto res = client().Get("/api/images");
    for (const auto& e : json::parse(res->body))
      if (e["id"].get<std::string>().starts_with(cls + "/")) return e["id"];
    return {};
  }
};

std::string box_body(int class_id, double cx, double cy, double w, double h) {
  return json{{"boxes", {{{"class_id", class_id}, {"cx", cx}, {"cy", cy}, {"w", w}, {"h", h}}}}}.dump();
}

}  // namespace

TEST_SUITE("annotation store") {
  TEST_CASE("lists images with dimensions and annotation state") {
    Served s;
    const AnnotationStore store(s.dir.path(), dataset_label_map(s.dir.path()));
    const auto images = store.list_images();
    CHECK(images.size() == 7);
    const auto loose = std::find_if(images.begin(), images.end(), [](const auto& e) { return e.id == "loose"; });
    REQUIRE(loose != images.end());
    CHECK(loose->width == 10);
    CHECK(loose->height == 8);
    CHECK_FALSE(loose->annotated);
    CHECK(std::count_if(images.begin(), images.end(), [](const auto& e) { return e.annotated; }) == 6);
    CHECK_FALSE(store.image_path("../etc/passwd").has_value());
    CHECK_FALSE(store.image_path("/abs").has_value());
    CHECK_THROWS_AS(AnnotationStore(s.dir / "missing", store.labels()), DataError);
  }

  TEST_CASE("a broken sidecar is flagged, not fatal") {
    Served s;
    std::ofstream(s.dir / "loose.txt") << "garbage\n";
    const AnnotationStore store(s.dir.path(), dataset_label_map(s.dir.path()));
    for (const auto& e : store.list_images())
      if (e.id == "loose") CHECK_FALSE(e.warning.empty());
  }
}

TEST_SUITE("http api") {
  TEST_CASE("image listing and bytes") {
    Served s;
    auto c = s.client();
    auto res = c.Get("/api/images");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto list = json::parse(res->body);
    CHECK(list.size() == 7);
    const std::string id = s.first_id("one");
    auto png = c.Get("/api/images/" + id);
    REQUIRE(png);
    CHECK(png->status == 200);
    CHECK(png->get_header_value("Content-Type") == "image/png");
    CHECK(png->body == file_text(s.dir / (id + ".png")));
    CHECK(c.Get("/api/images/nope")->status == 404);
    CHECK(c.Get("/api/images/..%2F..%2Fetc%2Fpasswd")->status == 404);
  }

  TEST_CASE("annotations use label map ids on the wire") {
    Served s;
    auto c = s.client();
    const std::string id = s.first_id("one");
    auto res = c.Get("/api/annotations/" + id);
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto doc = json::parse(res->body);
    CHECK(doc["id"] == id);
    REQUIRE(doc["boxes"].size() == 1);
    CHECK(doc["boxes"][0]["class_id"] == 2);  // "one" is the second entry; its sidecar holds 1
    CHECK(c.Get("/api/annotations/missing")->status == 404);

    auto loose = json::parse(c.Get("/api/annotations/loose")->body);
    CHECK(loose["boxes"].empty());
    CHECK(loose["width"] == 10);
  }

  TEST_CASE("put writes the sidecar and get reads it back") {
    Served s;
    auto c = s.client();
    auto res = c.Put("/api/annotations/loose", box_body(1, 0.5, 0.5, 0.25, 0.5), "application/json");
    REQUIRE(res);
    CHECK(res->status == 204);
    CHECK(file_text(s.dir / "loose.txt") == "0 0.500000 0.500000 0.250000 0.500000\n");
    const auto doc = json::parse(c.Get("/api/annotations/loose")->body);
    CHECK(doc["boxes"][0]["class_id"] == 1);
    CHECK(doc["boxes"][0]["w"] == 0.25);

    CHECK(c.Put("/api/annotations/loose", R"({"boxes":[]})", "application/json")->status == 204);
    CHECK(file_text(s.dir / "loose.txt").empty());
  }

  TEST_CASE("invalid puts name the offending field and leave the file alone") {
    Served s;
    auto c = s.client();
    const std::string id = s.first_id("zero");
    const auto before = file_text(s.dir / (id + ".txt"));
    struct Case {
      std::string body;
      std::string field;
    };
    const std::vector<Case> cases{
        {box_body(1, 0.5, 0.5, 0.0, 0.5), "boxes[0].w"},
        {box_body(1, 0.95, 0.5, 0.2, 0.5), "boxes[0].w"},
        {box_body(7, 0.5, 0.5, 0.2, 0.5), "boxes[0].class_id"},
        {box_body(0, 0.5, 0.5, 0.2, 0.5), "boxes[0].class_id"},
        {R"({"boxes":[{"class_id":1,"cx":0.5,"cy":0.5,"w":0.2}]})", "boxes[0].h"},
        {R"({"boxes":3})", "boxes"},
        {"not json", "body"},
    };
    for (const auto& tc : cases) {
      auto res = c.Put("/api/annotations/" + id, tc.body, "application/json");
      REQUIRE(res);
      CHECK(res->status == 400);
      CHECK(json::parse(res->body)["field"] == tc.field);
    }
    CHECK(file_text(s.dir / (id + ".txt")) == before);
    CHECK(c.Put("/api/annotations/missing", box_body(1, 0.5, 0.5, 0.2, 0.2), "application/json")->status == 404);
  }

  TEST_CASE("label map and root page") {
    Served s;
    auto c = s.client();
    const auto lm = json::parse(c.Get("/api/labelmap")->body);
    REQUIRE(lm.size() == 2);
    CHECK(lm[0] == json{{"id", 1}, {"name", "zero"}});
    CHECK(lm[1] == json{{"id", 2}, {"name", "one"}});
    auto root = c.Get("/");
    REQUIRE(root);
    CHECK(root->status == 200);
    CHECK(root->get_header_value("Content-Type").starts_with("text/html"));
    CHECK(c.Get("/api/unknown")->status == 404);
  }

  TEST_CASE("a mounted ui directory replaces the placeholder") {
    testing::TempDir ui;
    std::ofstream(ui / "index.html") << "<html>bundle</html>";
    Served s(ui.path());
    auto res = s.client().Get("/");
    REQUIRE(res);
    CHECK(res->body == "<html>bundle</html>");
  }

  TEST_CASE("concurrent puts leave one complete sidecar") {
    Served s;
    std::vector<std::thread> writers;
    std::vector<std::string> expected;
    for (int i = 0; i < 8; ++i) {
      const double w = 0.1 + 0.05 * i;
      expected.push_back(dataset::write_yolo(std::vector<dataset::YoloAnnotation>{{0, 0.5, 0.5, w, w}}));
      writers.emplace_back([&s, w] {
        auto c = s.client();
        for (int k = 0; k < 5; ++k) c.Put("/api/annotations/loose", box_body(1, 0.5, 0.5, w, w), "application/json");
      });
    }
    for (int i = 0; i < 4; ++i)
      writers.emplace_back([&s] {
        auto c = s.client();
        for (int k = 0; k < 10; ++k) CHECK(c.Get("/api/images")->status == 200);
      });
    for (auto& t : writers) t.join();
    const auto final_text = file_text(s.dir / "loose.txt");
    CHECK(std::find(expected.begin(), expected.end(), final_text) != expected.end());
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(s.dir.path())) files += e.is_regular_file();
    CHECK(files == 4);  // loose.png, loose.txt, label_map.pbtxt, manifest.tsv
  }

  TEST_CASE("gets do not modify the dataset") {
    Served s;
    std::map<std::string, std::string> before;
    for (const auto& e : std::filesystem::recursive_directory_iterator(s.dir.path()))
      if (e.is_regular_file()) before[e.path().string()] = file_text(e.path());
    auto c = s.client();
    for (const auto& e : json::parse(c.Get("/api/images")->body)) {
      c.Get("/api/images/" + e["id"].get<std::string>());
      c.Get("/api/annotations/" + e["id"].get<std::string>());
    }
    c.Get("/api/labelmap");
    std::map<std::string, std::string> after;
    for (const auto& e : std::filesystem::recursive_directory_iterator(s.dir.path()))
      if (e.is_regular_file()) after[e.path().string()] = file_text(e.path());
    CHECK(after == before);
  }
}
