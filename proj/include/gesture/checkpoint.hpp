// SPDX-License-Identifier: Apache-2.0
/**
 * @file checkpoint.hpp
 * @brief Binary network snapshots.
 *
 * Layout (all integers little-endian):
 *
 *     "GSTCKPT1"                      8-byte magic
 *     u16   format version (1)
 *     u32   descriptor length, UTF-8 architecture descriptor
 *     u32   parameter count
 *     per parameter:
 *       u32 name length, name bytes
 *       u32 rank, rank x u64 dims
 *       product(dims) x f64 (IEEE-754 little-endian)
 *     u64   training step
 *     u8    1 if a training-state block follows, else 0
 *     [training state: u32 epoch, u32 batch index, 4 x u64 RNG state at the
 *      start of that epoch, f64 running loss sum, u64 correct, u64 seen]
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gesture/network.hpp"
#include "gesture/rng.hpp"

namespace gesture::models {

inline constexpr char kCheckpointMagic[8] = {'G', 'S', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Where an interrupted training run stopped: `batch_index` batches of
/// `epoch` are done; `rng` is the trainer's generator state before that
/// epoch's shuffle.
struct TrainState {
  std::uint32_t epoch = 0;
  std::uint32_t batch_index = 0;
  Rng::State rng{};
  double loss_sum = 0.0;
  std::uint64_t correct = 0;
  std::uint64_t seen = 0;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct Checkpoint {
  Network network;
  std::uint64_t step = 0;
  std::optional<TrainState> train_state;
};

std::vector<std::uint8_t> serialize_checkpoint(const Network& net, std::uint64_t step,
                                               const std::optional<TrainState>& state = std::nullopt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network& net, std::uint64_t step, const std::filesystem::path& path,
                     const std::optional<TrainState>& state = std::nullopt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads parameters into an existing network; throws CheckpointError with
/// Kind::architecture_mismatch if the descriptors differ. Returns the step.
std::uint64_t load_into(Network& net, const std::filesystem::path& path);

}  // namespace gesture::models
