#pragma once

#include <string>
#include <vector>

#include "bta/sample.hpp"

namespace bta {

struct AnswerSpace {
  TaskKind task = TaskKind::open_ended;
  std::vector<std::string> labels;  // open-ended vocabulary
  long count_min = 1;
  long count_max = 10;
  std::size_t num_candidates = 0;  // multi-choice
};

/// A fully resolved, validated set of samples.
template <typename T>
struct Dataset {
  std::string name;
  AnswerSpace answers;
  std::size_t clips = 0;            // N
  std::size_t frames_per_clip = 0;  // T, so L = N·T
  std::size_t feature_dim = 0;
  std::size_t embed_dim = 0;
  std::vector<QASample<T>> samples;

  TaskKind task() const { return answers.task; }
  std::size_t frames() const { return clips * frames_per_clip; }

  const QASample<T>& find(const std::string& id) const {
    for (const auto& s : samples)
      if (s.id == id) return s;
    throw std::out_of_range("no sample with id '" + id + "'");
  }
};

}  // namespace bta
