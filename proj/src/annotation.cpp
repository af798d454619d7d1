// SPDX-License-Identifier: Apache-2.0
#include "gesture/annotation.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "gesture/dataset.hpp"
#include "gesture/error.hpp"

namespace gesture::dataset {

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class T>
std::optional<T> parse_number(std::string_view tok) {
  T v{};
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

}  // namespace

std::optional<FieldError> check_annotation(const YoloAnnotation& a) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (a.class_id < 0) return FieldError{"class_id", "must be non-negative"};
  if (!finite(a.cx) || a.cx < 0.0 || a.cx > 1.0) return FieldError{"cx", "must be in [0, 1]"};
  if (!finite(a.cy) || a.cy < 0.0 || a.cy > 1.0) return FieldError{"cy", "must be in [0, 1]"};
  if (!finite(a.w) || a.w <= 0.0 || a.w > 1.0) return FieldError{"w", "must be in (0, 1]"};
  if (!finite(a.h) || a.h <= 0.0 || a.h > 1.0) return FieldError{"h", "must be in (0, 1]"};
  if (a.cx - a.w / 2 < -kBoxTolerance || a.cx + a.w / 2 > 1.0 + kBoxTolerance)
    return FieldError{"w", "box extends outside the image horizontally"};
  if (a.cy - a.h / 2 < -kBoxTolerance || a.cy + a.h / 2 > 1.0 + kBoxTolerance)
    return FieldError{"h", "box extends outside the image vertically"};
  return std::nullopt;
}

YoloAnnotation parse_yolo_line(std::string_view line, std::size_t line_number) {
  const auto fields = split_ws(line);
  if (fields.size() != 5)
    throw ParseError("expected 5 fields, got " + std::to_string(fields.size()), line_number);
  YoloAnnotation a;
  const auto cls = parse_number<int>(fields[0]);
  if (!cls) throw ParseError("class id '" + std::string(fields[0]) + "' is not an integer", line_number);
  a.class_id = *cls;
  double* slots[4] = {&a.cx, &a.cy, &a.w, &a.h};
  static constexpr const char* kNames[4] = {"cx", "cy", "w", "h"};
  for (int i = 0; i < 4; ++i) {
    const auto v = parse_number<double>(fields[i + 1]);
    if (!v) throw ParseError(std::string(kNames[i]) + " '" + std::string(fields[i + 1]) + "' is not a number",
                             line_number);
    *slots[i] = *v;
  }
  if (auto err = check_annotation(a)) throw ParseError(err->field + " " + err->message, line_number);
  return a;
}

std::vector<YoloAnnotation> parse_yolo(std::string_view text) {
  std::vector<YoloAnnotation> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    ++line_no;
    if (!trim(line).empty()) out.push_back(parse_yolo_line(line, line_no));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

std::string write_yolo(std::span<const YoloAnnotation> anns) {
  std::string out;
  char buf[128];
  for (const auto& a : anns) {
    std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f\n", a.class_id, a.cx, a.cy, a.w, a.h);
    out += buf;
  }
  return out;
}

std::vector<YoloAnnotation> read_yolo_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_yolo(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_yolo_file(const std::filesystem::path& path, std::span<const YoloAnnotation> anns) {
  const std::string text = write_yolo(anns);
  auto tmp = path;
  tmp += ".tmp." + unique_image_id();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// VOC

namespace {

namespace pt = boost::property_tree;

int voc_int(const pt::ptree& node, const char* key, const char* element) {
  const auto child = node.get_optional<std::string>(key);
  if (!child) throw ParseError(std::string(element) + ": missing <" + key + ">");
  const auto text = trim(*child);
  if (auto v = parse_number<int>(text)) return *v;
  // Some tools write integral coordinates as "12.0".
  if (auto d = parse_number<double>(text); d && std::isfinite(*d) && *d == std::floor(*d))
    return static_cast<int>(*d);
  throw ParseError(std::string(element) + ": <" + key + "> is not an integer: '" + std::string(text) + "'");
}

}  // namespace

VocDocument parse_voc_xml(std::string_view xml) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("malformed XML: ") + e.message(), e.line());
  }
  if (tree.empty()) throw ParseError("annotation: empty document");
  const pt::ptree& root = tree.front().second;

  VocDocument doc;
  doc.filename = root.get<std::string>("filename", "");
  const auto size = root.get_child_optional("size");
  if (!size) throw ParseError("size: missing element");
  doc.width = voc_int(*size, "width", "size");
  doc.height = voc_int(*size, "height", "size");
  if (doc.width <= 0 || doc.height <= 0) throw ParseError("size: width and height must be positive");

  for (const auto& [tag, node] : root) {
    if (tag != "object") continue;
    VocObject obj;
    obj.name = std::string(trim(node.get<std::string>("name", "")));
    if (obj.name.empty()) throw ParseError("object: missing <name>");
    const auto box = node.get_child_optional("bndbox");
    if (!box) throw ParseError("bndbox: missing for object '" + obj.name + "'");
    obj.box.x_min = voc_int(*box, "xmin", "bndbox");
    obj.box.y_min = voc_int(*box, "ymin", "bndbox");
    obj.box.x_max = voc_int(*box, "xmax", "bndbox");
    obj.box.y_max = voc_int(*box, "ymax", "bndbox");
    if (obj.box.x_max < obj.box.x_min || obj.box.y_max < obj.box.y_min)
      throw ParseError("bndbox: max < min for object '" + obj.name + "'");
    doc.objects.push_back(std::move(obj));
  }
  return doc;
}

std::string write_voc_xml(const VocDocument& doc) {
  std::ostringstream out;
  out << "<annotation>\n";
  out << "  <filename>" << doc.filename << "</filename>\n";
  out << "  <size>\n    <width>" << doc.width << "</width>\n    <height>" << doc.height
      << "</height>\n    <depth>3</depth>\n  </size>\n";
  for (const auto& o : doc.objects) {
    out << "  <object>\n    <name>" << o.name << "</name>\n    <bndbox>\n";
    out << "      <xmin>" << o.box.x_min << "</xmin>\n      <ymin>" << o.box.y_min << "</ymin>\n";
    out << "      <xmax>" << o.box.x_max << "</xmax>\n      <ymax>" << o.box.y_max << "</ymax>\n";
    out << "    </bndbox>\n  </object>\n";
  }
  out << "</annotation>\n";
  return out.str();
}

YoloAnnotation voc_to_yolo(const PixelBox& box, int class_id, int img_w, int img_h) {
  if (img_w <= 0 || img_h <= 0 || box.x_min < 0 || box.y_min < 0 || box.x_max >= img_w || box.y_max >= img_h ||
      box.x_min > box.x_max || box.y_min > box.y_max)
    throw ContractViolation("voc_to_yolo: box (" + std::to_string(box.x_min) + "," + std::to_string(box.y_min) +
                            "," + std::to_string(box.x_max) + "," + std::to_string(box.y_max) +
                            ") is not inside a " + std::to_string(img_w) + "x" + std::to_string(img_h) + " image");
  YoloAnnotation a;
  a.class_id = class_id;
  a.cx = (box.x_min + box.x_max + 1) / (2.0 * img_w);
  a.cy = (box.y_min + box.y_max + 1) / (2.0 * img_h);
  a.w = (box.x_max - box.x_min + 1) / static_cast<double>(img_w);
  a.h = (box.y_max - box.y_min + 1) / static_cast<double>(img_h);
  return a;
}

PixelBox yolo_to_pixel_box(const YoloAnnotation& a, int img_w, int img_h) {
  const long bw = std::max(1L, std::lround(a.w * img_w));
  const long bh = std::max(1L, std::lround(a.h * img_h));
  PixelBox box;
  box.x_min = static_cast<int>(std::lround(a.cx * img_w - a.w * img_w / 2.0));
  box.y_min = static_cast<int>(std::lround(a.cy * img_h - a.h * img_h / 2.0));
  box.x_max = box.x_min + static_cast<int>(bw) - 1;
  box.y_max = box.y_min + static_cast<int>(bh) - 1;
  box.x_min = std::clamp(box.x_min, 0, img_w - 1);
  box.y_min = std::clamp(box.y_min, 0, img_h - 1);
  box.x_max = std::clamp(box.x_max, box.x_min, img_w - 1);
  box.y_max = std::clamp(box.y_max, box.y_min, img_h - 1);
  return box;
}

// ---------------------------------------------------------------------------
// Label maps

std::optional<int> LabelMap::id_of(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return e.id;
  return std::nullopt;
}

const std::string& LabelMap::name_of(int id) const {
  for (const auto& e : entries)
    if (e.id == id) return e.name;
  throw ContractViolation("label map has no id " + std::to_string(id));
}

LabelMap build_label_map(std::span<const std::string> names) {
  LabelMap map;
  std::set<std::string> seen;
  int id = 1;
  for (const auto& n : names) {
    if (n.empty()) throw ContractViolation("label map: empty class name");
    if (!seen.insert(n).second) throw ContractViolation("label map: duplicate class name '" + n + "'");
    map.entries.push_back({n, id++});
  }
  return map;
}

std::string write_label_map(const LabelMap& map) {
  std::string out;
  for (const auto& e : map.entries)
    out += "item {\n  name: '" + e.name + "'\n  id: " + std::to_string(e.id) + "\n}\n";
  return out;
}

LabelMap parse_label_map(std::string_view text) {
  LabelMap map;
  std::optional<std::string> name;
  int id = 0;
  bool has_id = false;
  bool in_item = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.starts_with("item")) {
      if (in_item) throw ParseError("nested item", line_no);
      in_item = true;
      name.reset();
      has_id = false;
      continue;
    }
    if (line == "}") {
      if (!in_item || !name || !has_id) throw ParseError("incomplete item", line_no);
      map.entries.push_back({*name, id});
      in_item = false;
      continue;
    }
    if (!in_item) throw ParseError("field outside item", line_no);
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw ParseError("expected 'key: value'", line_no);
    const auto key = trim(line.substr(0, colon));
    auto value = trim(line.substr(colon + 1));
    if (key == "name") {
      if (value.size() >= 2 && (value.front() == '\'' || value.front() == '"') && value.back() == value.front())
        value = value.substr(1, value.size() - 2);
      name = std::string(value);
    } else if (key == "id") {
      const auto parsed = parse_number<int>(value);
      if (!parsed) throw ParseError("id is not an integer", line_no);
      id = *parsed;
      has_id = true;
    }
  }
  if (in_item) throw ParseError("unterminated item", line_no);
  for (std::size_t i = 0; i < map.entries.size(); ++i)
    if (map.entries[i].id != static_cast<int>(i) + 1)
      throw ParseError("label ids must be 1..N in order; entry '" + map.entries[i].name + "' has id " +
                       std::to_string(map.entries[i].id));
  std::vector<std::string> names;
  for (const auto& e : map.entries) names.push_back(e.name);
  try {
    build_label_map(names);
  } catch (const ContractViolation& e) {
    throw ParseError(e.what());
  }
  return map;
}

LabelMap read_label_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read label map " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_label_map(ss.str());
}

void write_label_map_file(const std::filesystem::path& path, const LabelMap& map) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write label map " + path.string());
  out << write_label_map(map);
}

}  // namespace gesture::dataset
