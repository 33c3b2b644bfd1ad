#include "bta/graph.hpp"

#include <string>

namespace bta {

std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::open_ended: return "open_ended";
    case TaskKind::count: return "count";
    case TaskKind::multi_choice: return "multi_choice";
  }
  return "?";
}

TaskKind parse_task(const std::string& name) {
  if (name == "open_ended") return TaskKind::open_ended;
  if (name == "count") return TaskKind::count;
  if (name == "multi_choice") return TaskKind::multi_choice;
  throw std::invalid_argument("unknown task kind '" + name + "'");
}

template <typename T>
QuestionInput<T> append_candidate(const QuestionInput<T>& question,
                                  const QuestionInput<T>& candidate) {
  QuestionInput<T> out;
  out.tokens = question.tokens;
  out.tokens.insert(out.tokens.end(), candidate.tokens.begin(), candidate.tokens.end());
  out.embeddings = concat_rows<T>({question.embeddings, candidate.embeddings});
  out.edges = question.edges;
  const std::size_t k = question.size();
  for (auto e : candidate.edges) {
    e.head += k;
    e.dependent += k;
    out.edges.push_back(std::move(e));
  }
  return out;
}

namespace {
template <typename T>
Tensor<T> affinity_softmax(const Tensor<T>& nodes, T lambda) {
  if (nodes.rank() != 2) {
    throw DimensionError("edge weights need an n × d node matrix, got " +
                         shape_str(nodes.shape()));
  }
  return softmax_along_axis(matmul(nodes, transpose(nodes)), 1, lambda);
}
}  // namespace

template <typename T>
Tensor<T> visual_edge_weights(const Tensor<T>& nodes, T lambda) {
  return affinity_softmax(nodes, lambda);
}

template <typename T>
Tensor<T> question_affinity(const Tensor<T>& question_nodes, T lambda) {
  return affinity_softmax(question_nodes, lambda);
}

template <typename T>
Tensor<T> adjacency_from_dependencies(const std::vector<DependencyEdge>& edges, std::size_t k) {
  std::vector<T> a(k * k, T(0));
  for (std::size_t i = 0; i < k; ++i) a[i * k + i] = T(1);
  for (const auto& e : edges) {
    for (auto idx : {e.head, e.dependent}) {
      if (idx >= k) {
        throw IngestionError("dependency edge '" + e.relation + "' references token " +
                             std::to_string(idx) + " but the question has " +
                             std::to_string(k) + " tokens");
      }
    }
    if (e.head == e.dependent) {
      throw IngestionError("dependency edge '" + e.relation + "' is a self-edge on token " +
                           std::to_string(e.head));
    }
    a[e.head * k + e.dependent] = T(1);
    a[e.dependent * k + e.head] = T(1);
  }
  return Tensor<T>({k, k}, std::move(a));
}

template <typename T>
Tensor<T> question_weight_matrix(const Tensor<T>& affinity, const Tensor<T>& adjacency) {
  return row_l2_normalize(mul(affinity, adjacency));
}

template <typename T>
Tensor<T> question_graph_weights(const Tensor<T>& u, const Tensor<T>& adjacency, T lambda) {
  if (u.rank() != 2 || adjacency.shape() != Shape{u.dim(0), u.dim(0)}) {
    throw DimensionError("question_graph_weights: nodes " + shape_str(u.shape()) + ", adjacency " +
                         shape_str(adjacency.shape()));
  }
  std::vector<T> penalty(adjacency.numel());
  for (std::size_t i = 0; i < penalty.size(); ++i) {
    penalty[i] = adjacency.at(i) != T(0) ? T(0) : T(-1e30);
  }
  const auto scores = add(scale(matmul(u, transpose(u)), lambda), Tensor<T>(adjacency.shape(), penalty));
  return row_l2_normalize(mul(softmax_along_axis(scores, 1), adjacency));
}

#define BTA_INSTANTIATE(T)                                                                  \
  template QuestionInput<T> append_candidate(const QuestionInput<T>&, const QuestionInput<T>&); \
  template Tensor<T> visual_edge_weights(const Tensor<T>&, T);                              \
  template Tensor<T> question_affinity(const Tensor<T>&, T);                                \
  template Tensor<T> adjacency_from_dependencies<T>(const std::vector<DependencyEdge>&,     \
                                                    std::size_t);                           \
  template Tensor<T> question_weight_matrix(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> question_graph_weights(const Tensor<T>&, const Tensor<T>&, T);

BTA_INSTANTIATE(float)
BTA_INSTANTIATE(double)

#undef BTA_INSTANTIATE

}  // namespace bta
