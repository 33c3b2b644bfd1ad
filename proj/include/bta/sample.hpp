#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bta/tensor.hpp"

namespace bta {

enum class TaskKind { open_ended, count, multi_choice };

std::string task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

/// One dependency relation between two tokens of a question, 0-based.
struct DependencyEdge {
  std::size_t head = 0;
  std::size_t dependent = 0;
  std::string relation;

  bool operator==(const DependencyEdge&) const = default;
};

/// Tokens, their word embeddings (K × embed_dim) and the parse over them.
template <typename T>
struct QuestionInput {
  std::vector<std::string> tokens;
  Tensor<T> embeddings;
  std::vector<DependencyEdge> edges;

  std::size_t size() const { return embeddings.defined() ? embeddings.dim(0) : 0; }
};

/// Question followed by a candidate answer, as used for candidate-conditioned
/// passes: candidate tokens are appended and their edges shifted by K.
template <typename T>
QuestionInput<T> append_candidate(const QuestionInput<T>& question,
                                  const QuestionInput<T>& candidate);

template <typename T>
struct QASample {
  std::string id;
  Tensor<T> appearance;  // L × d_in, frames of all clips flattened in order
  Tensor<T> motion;      // N × d_in
  QuestionInput<T> question;
  std::vector<QuestionInput<T>> candidates;  // multi-choice only
  /// Label index, integer count, or correct candidate index depending on the task.
  long answer = 0;
};

}  // namespace bta
