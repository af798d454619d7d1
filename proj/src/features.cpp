// SPDX-License-Identifier: Apache-2.0
#include "gesture/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gesture/error.hpp"

namespace gesture::models {

namespace fs = std::filesystem;

imaging::Component segment_hand(const imaging::ImageU8& rgb, imaging::ChromaRange cb, imaging::ChromaRange cr) {
  const auto mask = imaging::morph_close(imaging::morph_open(imaging::skin_mask_ycbcr(imaging::enhance(rgb), cb, cr)));
  return imaging::largest_component(mask);
}

FeatureVector features_from_component(const imaging::Component& component) {
  const auto hu = imaging::hu_moments(component.mask);
  FeatureVector f{};
  std::copy(hu.begin(), hu.end(), f.begin());
  f[7] = static_cast<double>(component.box.width()) / component.box.height();
  f[8] = static_cast<double>(component.area) / static_cast<double>(component.box.area());
  return f;
}

FeatureVector extract_gesture_features(const imaging::ImageU8& rgb) {
  return features_from_component(segment_hand(rgb));
}

FeatureStore::FeatureStore(std::vector<Entry> entries, FeatureVector mean, FeatureVector stddev)
    : entries_(std::move(entries)), mean_(mean), stddev_(stddev) {
  for (double s : stddev_)
    if (!(s > 0.0)) throw ContractViolation("feature store: standard deviations must be positive");
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) { return a.id < b.id; });
}

FeatureStore FeatureStore::build(std::vector<Entry> raw) {
  std::size_t n = 0;
  FeatureVector mean{}, var{};
  for (const auto& e : raw)
    for (const auto& v : e.vectors) {
      for (std::size_t d = 0; d < kFeatureDim; ++d) mean[d] += v[d];
      ++n;
    }
  if (n == 0) throw ContractViolation("feature store: no vectors to enroll");
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& e : raw)
    for (const auto& v : e.vectors)
      for (std::size_t d = 0; d < kFeatureDim; ++d) var[d] += (v[d] - mean[d]) * (v[d] - mean[d]);
  FeatureVector stddev{};
  for (std::size_t d = 0; d < kFeatureDim; ++d)
    stddev[d] = std::max(std::sqrt(var[d] / static_cast<double>(n)), kStdFloor);

  FeatureStore store({}, mean, stddev);
  for (auto& e : raw)
    for (auto& v : e.vectors) v = store.standardize(v);
  return FeatureStore(std::move(raw), mean, stddev);
}

FeatureVector FeatureStore::standardize(const FeatureVector& raw) const {
  FeatureVector out{};
  for (std::size_t d = 0; d < kFeatureDim; ++d) out[d] = (raw[d] - mean_[d]) / stddev_[d];
  return out;
}

bool FeatureStore::empty() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.vectors.empty(); });
}

namespace {

std::string format_vector(const FeatureVector& v) {
  std::string line;
  char buf[40];
  for (std::size_t d = 0; d < kFeatureDim; ++d) {
    std::snprintf(buf, sizeof(buf), "%.17g", v[d]);
    if (d) line += ' ';
    line += buf;
  }
  return line;
}

FeatureVector parse_vector(std::istream& in, const std::string& where) {
  FeatureVector v{};
  for (auto& x : v)
    if (!(in >> x)) throw DataError(where + ": expected " + std::to_string(kFeatureDim) + " numbers");
  return v;
}

}  // namespace

void FeatureStore::save(const fs::path& dir) const {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "standardization.txt", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / "standardization.txt").string());
    out << "mean " << format_vector(mean_) << "\n";
    out << "std " << format_vector(stddev_) << "\n";
    for (const auto& e : entries_) out << "label " << e.id << ' ' << e.label << "\n";
  }
  for (const auto& e : entries_) {
    std::ofstream out(dir / (e.label + ".txt"), std::ios::trunc);
    if (!out) throw DataError("cannot write feature file for " + e.label);
    for (const auto& v : e.vectors) out << format_vector(v) << "\n";
  }
}

FeatureStore FeatureStore::load(const fs::path& dir) {
  const auto meta = dir / "standardization.txt";
  std::ifstream in(meta);
  if (!in) throw DataError("cannot read " + meta.string());
  FeatureVector mean{}, stddev{};
  bool have_mean = false, have_std = false;
  std::vector<Entry> entries;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "mean") {
      mean = parse_vector(ls, meta.string());
      have_mean = true;
    } else if (key == "std") {
      stddev = parse_vector(ls, meta.string());
      have_std = true;
    } else if (key == "label") {
      Entry e;
      if (!(ls >> e.id >> e.label)) throw DataError(meta.string() + ": malformed label line");
      entries.push_back(std::move(e));
    }
  }
  if (!have_mean || !have_std) throw DataError(meta.string() + ": missing mean/std");
  for (auto& e : entries) {
    const auto file = dir / (e.label + ".txt");
    std::ifstream vin(file);
    if (!vin) throw DataError("cannot read " + file.string());
    std::string vline;
    while (std::getline(vin, vline)) {
      if (vline.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream vs(vline);
      e.vectors.push_back(parse_vector(vs, file.string()));
    }
  }
  return FeatureStore(std::move(entries), mean, stddev);
}

Match nearest_match(const FeatureStore& store, const FeatureVector& raw_query) {
  if (store.empty()) throw ContractViolation("nearest_match: empty feature store");
  const FeatureVector q = store.standardize(raw_query);
  Match best{"", 0, std::numeric_limits<double>::infinity()};
  // Entries are sorted by id, so strict '<' keeps the smaller id on ties.
  for (const auto& e : store.entries())
    for (const auto& v : e.vectors) {
      double s = 0.0;
      for (std::size_t d = 0; d < kFeatureDim; ++d) s += (q[d] - v[d]) * (q[d] - v[d]);
      const double dist = std::sqrt(s);
      if (dist < best.distance) best = {e.label, e.id, dist};
    }
  return best;
}

}  // namespace gesture::models
