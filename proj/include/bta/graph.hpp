#pragma once

#include <stdexcept>
#include <vector>

#include "bta/sample.hpp"
#include "bta/tensor.hpp"

namespace bta {

/// A dependency record does not fit the question it belongs to.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row i is the softmax over j of λ·⟨x_i, x_j⟩. Used for the appearance graph
/// (all L frames as one node set) and the motion graph (N clips).
template <typename T>
Tensor<T> visual_edge_weights(const Tensor<T>& nodes, T lambda);

/// Same kernel as visual_edge_weights, over question nodes.
template <typename T>
Tensor<T> question_affinity(const Tensor<T>& question_nodes, T lambda);

/// Symmetric 0/1 matrix with a unit diagonal and A[h][d] = A[d][h] = 1 per edge.
template <typename T>
Tensor<T> adjacency_from_dependencies(const std::vector<DependencyEdge>& edges, std::size_t k);

/// Row-wise L2 normalization of E∘A.
template <typename T>
Tensor<T> question_weight_matrix(const Tensor<T>& affinity, const Tensor<T>& adjacency);

/// row_l2(softmax(λUUᵀ) ∘ A) evaluated with the softmax restricted to the
/// entries A keeps. The row normalizer and max shift cancel under the L2
/// normalization, so this is the same matrix, but rows cannot underflow to
/// zero when λ·⟨u_i, u_j⟩ spreads wider than the float exponent range.
template <typename T>
Tensor<T> question_graph_weights(const Tensor<T>& question_nodes, const Tensor<T>& adjacency,
                                 T lambda);

template <typename T>
struct GraphBundle {
  Tensor<T> appearance;  // W^v, L × L (undefined when the branch is ablated)
  Tensor<T> motion;      // W^m, N × N
  Tensor<T> question;    // W^q, K × K
  Tensor<T> adjacency;   // A, K × K
  Tensor<T> affinity;    // E, K × K
};

}  // namespace bta
