// SPDX-License-Identifier: Apache-2.0
#include "gesture/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "gesture/error.hpp"

namespace gesture::dataset {

namespace fs = std::filesystem;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "-";
  }
}

std::vector<ManifestItem> DatasetManifest::subset(Split s) const {
  std::vector<ManifestItem> out;
  for (const auto& it : items)
    if (it.split == s) out.push_back(it);
  return out;
}

std::vector<std::string> DatasetManifest::class_names() const {
  std::vector<std::string> out;
  for (const auto& it : items)
    if (std::find(out.begin(), out.end(), it.class_name) == out.end()) out.push_back(it.class_name);
  return out;
}

std::size_t train_count(std::size_t n, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ContractViolation("split: train fraction must be in (0, 1), got " + std::to_string(train_fraction));
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
}

namespace {
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}
}  // namespace

SplitResult split_dataset(std::span<const std::string> item_ids, double train_fraction, std::uint64_t seed) {
  if (item_ids.empty()) throw ContractViolation("split: no items");
  const std::size_t n_train = train_count(item_ids.size(), train_fraction);
  const auto order = shuffled_order(item_ids.size(), seed);
  SplitResult out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? out.train : out.val).push_back(item_ids[order[i]]);
  return out;
}

void assign_split(DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  if (manifest.items.empty()) throw ContractViolation("split: no items");
  const std::size_t n_train = train_count(manifest.items.size(), train_fraction);
  const auto order = shuffled_order(manifest.items.size(), seed);
  for (std::size_t i = 0; i < order.size(); ++i)
    manifest.items[order[i]].split = i < n_train ? Split::train : Split::val;
  manifest.seed = seed;
}

namespace {
std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}
}  // namespace

DatasetManifest ingest_directory(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("dataset root is not a directory: " + root.string());

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DataError("dataset root has no class directories: " + root.string());

  DatasetManifest manifest;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    const std::string class_name = dir.filename().string();
    std::size_t images = 0;
    for (const auto& f : files) {
      const auto ext = lower(f.extension().string());
      if (ext == ".png") {
        manifest.items.push_back({class_name + "/" + f.stem().string(), f, class_name, Split::unassigned});
        ++images;
      } else if (ext != ".txt" && ext != ".xml") {
        manifest.warnings.push_back("skipped non-image file " + f.string());
      }
    }
    if (images == 0) throw DataError("class directory has no images: " + dir.string());
  }
  return manifest;
}

std::string write_manifest(const DatasetManifest& manifest, const fs::path& base_dir) {
  std::ostringstream out;
  out << "# seed\t" << manifest.seed << "\n";
  for (const auto& it : manifest.items) {
    fs::path p = it.image_path;
    if (!base_dir.empty()) {
      std::error_code ec;
      auto rel = fs::relative(p, base_dir, ec);
      if (!ec && !rel.empty()) p = rel;
    }
    out << it.image_id << '\t' << p.generic_string() << '\t' << it.class_name << '\t' << to_string(it.split) << '\n';
  }
  return out.str();
}

DatasetManifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  DatasetManifest manifest;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.starts_with("# seed\t")) manifest.seed = std::stoull(line.substr(7));
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) throw ParseError("manifest: expected 4 tab-separated fields", line_no);
    ManifestItem item;
    item.image_id = fields[0];
    fs::path p = fields[1];
    item.image_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    item.class_name = fields[2];
    if (fields[3] == "train")
      item.split = Split::train;
    else if (fields[3] == "val")
      item.split = Split::val;
    else if (fields[3] == "-")
      item.split = Split::unassigned;
    else
      throw ParseError("manifest: unknown split '" + fields[3] + "'", line_no);
    if (!ids.insert(item.image_id).second) throw ParseError("manifest: duplicate id '" + item.image_id + "'", line_no);
    manifest.items.push_back(std::move(item));
  }
  return manifest;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << write_manifest(manifest, path.parent_path());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string unique_image_id(Rng& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(32);
  for (int word = 0; word < 2; ++word) {
    std::uint64_t v = rng.next_u64();
    for (int i = 0; i < 16; ++i) {
      out += kHex[(v >> 60) & 0xF];
      v <<= 4;
    }
  }
  return out;
}

std::string unique_image_id() {
  thread_local Rng rng = [] {
    std::random_device rd;
    const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    return Rng(seed);
  }();
  return unique_image_id(rng);
}

}  // namespace gesture::dataset
