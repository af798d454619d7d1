// SPDX-License-Identifier: Apache-2.0
#include "gesture/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gesture/dataset.hpp"
#include "gesture/error.hpp"

namespace gesture::models {

namespace fs = std::filesystem;
using Kind = CheckpointError::Kind;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
 public:
  template <class T>
  void put(T v) {
    std::uint64_t bits;
    if constexpr (std::is_same_v<T, double>)
      bits = std::bit_cast<std::uint64_t>(v);
    else
      bits = static_cast<std::uint64_t>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void bytes(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const void* p, std::size_t n) {
    auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>)
      return std::bit_cast<double>(bits);
    else
      return static_cast<T>(bits);
  }
  std::string bytes() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw CheckpointError(Kind::truncated, "checkpoint truncated");
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Network& net, std::uint64_t step,
                                               const std::optional<TrainState>& state) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.put<std::uint16_t>(kCheckpointVersion);
  w.bytes(net.descriptor());
  const auto params = net.parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.bytes(p->name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) w.put<std::uint64_t>(d);
    for (double v : p->value.values()) w.put<double>(v);
  }
  w.put<std::uint64_t>(step);
  w.put<std::uint8_t>(state ? 1 : 0);
  if (state) {
    w.put<std::uint32_t>(state->epoch);
    w.put<std::uint32_t>(state->batch_index);
    for (auto s : state->rng) w.put<std::uint64_t>(s);
    w.put<double>(state->loss_sum);
    w.put<std::uint64_t>(state->correct);
    w.put<std::uint64_t>(state->seen);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw CheckpointError(Kind::not_a_checkpoint, "not a checkpoint (bad magic)");
  Reader r(bytes.subspan(sizeof(kCheckpointMagic)));
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::version_mismatch, "unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  const std::string descriptor = r.bytes();
  try {
    ck.network = Network::from_descriptor(descriptor);
  } catch (const ContractViolation& e) {
    throw CheckpointError(Kind::architecture_mismatch, std::string("unreadable architecture: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  auto params = ck.network.parameters();
  if (count != params.size())
    throw CheckpointError(Kind::architecture_mismatch, "parameter count does not match architecture");
  for (auto* p : params) {
    const std::string name = r.bytes();
    if (name != p->name)
      throw CheckpointError(Kind::architecture_mismatch, "expected parameter " + p->name + ", found " + name);
    const auto rank = r.get<std::uint32_t>();
    Tensor::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    if (shape != p->value.shape())
      throw CheckpointError(Kind::architecture_mismatch, "shape mismatch for " + name);
    r.need(p->value.size() * sizeof(double));
    for (auto& v : p->value.values()) v = r.get<double>();
  }
  ck.step = r.get<std::uint64_t>();
  if (r.get<std::uint8_t>()) {
    TrainState s;
    s.epoch = r.get<std::uint32_t>();
    s.batch_index = r.get<std::uint32_t>();
    for (auto& x : s.rng) x = r.get<std::uint64_t>();
    s.loss_sum = r.get<double>();
    s.correct = r.get<std::uint64_t>();
    s.seen = r.get<std::uint64_t>();
    ck.train_state = s;
  }
  return ck;
}

void save_checkpoint(const Network& net, std::uint64_t step, const fs::path& path,
                     const std::optional<TrainState>& state) {
  const auto bytes = serialize_checkpoint(net, step, state);
  auto tmp = path;
  tmp += ".tmp." + dataset::unique_image_id();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(Kind::io, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CheckpointError(Kind::io, "cannot rename into " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::uint64_t load_into(Network& net, const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.network.descriptor() != net.descriptor())
    throw CheckpointError(Kind::architecture_mismatch, "checkpoint architecture '" + ck.network.descriptor() +
                                                           "' does not match '" + net.descriptor() + "'");
  auto dst = net.parameters();
  auto src = ck.network.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
  return ck.step;
}

}  // namespace gesture::models
