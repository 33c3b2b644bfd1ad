#pragma once

#include <map>
#include <string>

#include "bta/layers.hpp"
#include "bta/tensor.hpp"

namespace bta {

/// Row-softmax over the question axis of λ·X·Uᵀ: entry (i, j) says how much
/// question node j is associated with node i.
template <typename T>
Tensor<T> interaction_matrix(const Tensor<T>& nodes, const Tensor<T>& question, T lambda);

template <typename T>
struct Q2VResult {
  Tensor<T> interaction;  // S, n × K
  Tensor<T> aggregated;   // X′ after the FC layer, n × d′
  Tensor<T> conditioned;  // GCN output, n × d′
};

/// Aggregate question nodes into visual nodes through S, apply the FC layer,
/// then propagate over the visual graph.
template <typename T>
Q2VResult<T> q2v_interaction(const Tensor<T>& nodes, const Tensor<T>& question,
                             const Tensor<T>& graph_weights, const LinearLayer<T>& fc,
                             const GCNStack<T>& gcn, T lambda);

template <typename T>
struct BridgeResult {
  Tensor<T> attention;   // K × n, softmax over the visual nodes
  Tensor<T> bridged;     // U_b, K × d′
  Tensor<T> aggregated;  // Û_b = U + F(W^q, U_b), K × d′
};

/// Bridge a conditioned visual graph onto the question graph and propagate it
/// along question edges, keeping the residual to U.
template <typename T>
BridgeResult<T> bridge_aggregate(const Tensor<T>& question, const Tensor<T>& conditioned,
                                 const Tensor<T>& question_weights, const GCNStack<T>& gcn,
                                 T lambda);

template <typename T>
struct DeliverResult {
  Tensor<T> interaction;  // S_b (or S_wob), n × K (or n × m)
  Tensor<T> output;       // n × d_f
};

/// Deliver the aggregated question nodes to the target visual graph.
template <typename T>
DeliverResult<T> v2v_deliver(const Tensor<T>& conditioned, const Tensor<T>& aggregated_question,
                             const LinearLayer<T>& fc, T lambda);

/// Direct visual-to-visual aggregation used when the question bridge is removed.
template <typename T>
DeliverResult<T> v2v_no_bridge(const Tensor<T>& target, const Tensor<T>& source,
                               const LinearLayer<T>& fc, T lambda);

/// Interaction matrices captured during one forward pass, keyed by symbol:
/// "S^v", "S^m", "S_b^v", "S_b^m", "bridge^m" (K × N), "bridge^v" (K × L),
/// "S_wob^v", "S_wob^m". Only the stages that ran are present.
template <typename T>
struct InteractionTrace {
  std::map<std::string, Tensor<T>> matrices;
  std::vector<std::string> frame_labels;
  std::vector<std::string> clip_labels;
  std::vector<std::string> token_labels;
};

}  // namespace bta
