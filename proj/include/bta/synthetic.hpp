#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bta/dataset.hpp"

namespace bta {

/// Desk-scale generator. Answers are planted functions of the features:
///  - open-ended: index of the motion prototype nearest the mean clip feature;
///  - count: number of clips carrying a burst along a fixed direction;
///  - multi-choice: the correct candidate's embedding is a fixed linear image
///    of the direction planted in the appearance frames.
/// Question graphs are random trees over the tokens.
struct SyntheticSpec {
  TaskKind task = TaskKind::open_ended;
  std::uint64_t seed = 0;
  std::size_t samples = 16;
  std::size_t clips = 4;
  std::size_t frames_per_clip = 4;
  std::size_t tokens = 6;
  std::size_t feature_dim = 32;
  std::size_t embed_dim = 300;
  std::size_t num_labels = 4;
  std::size_t num_candidates = 4;
  std::size_t candidate_tokens = 2;
  long count_max = 5;
  /// Standard deviation of the feature noise.
  double noise = 0.1;
};

/// Bursts are clips whose projection on this unit direction exceeds
/// kBurstThreshold.
std::vector<double> synthetic_burst_direction(const SyntheticSpec& spec);
inline constexpr double kBurstThreshold = 1.5;

template <typename T>
Dataset<T> generate_synthetic(const SyntheticSpec& spec);

/// Writes manifest.json plus tensor files under `dir`; returns the manifest path.
/// Feature files are f32, so loading them reproduces generate_synthetic exactly.
std::filesystem::path write_synthetic_dataset(const SyntheticSpec& spec,
                                              const std::filesystem::path& dir);

}  // namespace bta
