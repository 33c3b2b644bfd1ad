#pragma once

#include <filesystem>
#include <stdexcept>

#include "bta/model.hpp"
#include "bta/tensor_file.hpp"
#include "bta/training.hpp"

namespace bta {

// Container, little-endian:
//   "BTAC" | u16 version (1) | u64 header length | JSON header |
//   u32 tensor count | (u32 name length | name | tensor record) × count
// Tensors are the parameters in store order followed by adam.m/<name> and
// adam.v/<name> for each parameter.
inline constexpr char kCheckpointMagic[4] = {'B', 'T', 'A', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// The checkpoint does not fit the model it is being loaded into.
class CheckpointMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointHeader {
  ModelConfig model;
  TrainConfig train;
  Precision precision = Precision::f32;
  std::uint64_t optimizer_step = 0;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, const AdamState<T>& state,
                     const TrainConfig& train);

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Restores parameters (and optimizer state when `state` is given). Names and
/// shapes must match `model` exactly.
template <typename T>
CheckpointHeader load_checkpoint(const std::filesystem::path& path, Model<T>& model, AdamState<T>* state);

}  // namespace bta
