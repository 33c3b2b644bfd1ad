#include "bta/interactions.hpp"

namespace bta {

template <typename T>
Tensor<T> interaction_matrix(const Tensor<T>& nodes, const Tensor<T>& question, T lambda) {
  if (nodes.rank() != 2 || question.rank() != 2 || nodes.dim(1) != question.dim(1)) {
    throw DimensionError("interaction_matrix: " + shape_str(nodes.shape()) + " vs " +
                         shape_str(question.shape()));
  }
  return softmax_along_axis(matmul(nodes, transpose(question)), 1, lambda);
}

template <typename T>
Q2VResult<T> q2v_interaction(const Tensor<T>& nodes, const Tensor<T>& question,
                             const Tensor<T>& graph_weights, const LinearLayer<T>& fc,
                             const GCNStack<T>& gcn, T lambda) {
  Q2VResult<T> r;
  r.interaction = interaction_matrix(nodes, question, lambda);
  r.aggregated = linear_forward(fc, add(nodes, matmul(r.interaction, question)));
  r.conditioned = gcn_forward(gcn, graph_weights, r.aggregated, true);
  return r;
}

template <typename T>
BridgeResult<T> bridge_aggregate(const Tensor<T>& question, const Tensor<T>& conditioned,
                                 const Tensor<T>& question_weights, const GCNStack<T>& gcn,
                                 T lambda) {
  BridgeResult<T> r;
  r.attention = interaction_matrix(question, conditioned, lambda);
  r.bridged = matmul(r.attention, conditioned);
  // W^q already carries the question graph's self-loops.
  r.aggregated = add(question, gcn_forward(gcn, question_weights, r.bridged, false));
  return r;
}

template <typename T>
DeliverResult<T> v2v_deliver(const Tensor<T>& conditioned, const Tensor<T>& aggregated_question,
                             const LinearLayer<T>& fc, T lambda) {
  DeliverResult<T> r;
  r.interaction = interaction_matrix(conditioned, aggregated_question, lambda);
  r.output = linear_forward(fc, add(conditioned, matmul(r.interaction, aggregated_question)));
  return r;
}

template <typename T>
DeliverResult<T> v2v_no_bridge(const Tensor<T>& target, const Tensor<T>& source,
                               const LinearLayer<T>& fc, T lambda) {
  DeliverResult<T> r;
  r.interaction = interaction_matrix(target, source, lambda);
  r.output = linear_forward(fc, add(target, matmul(r.interaction, source)));
  return r;
}

#define BTA_INSTANTIATE(T)                                                                  \
  template Tensor<T> interaction_matrix(const Tensor<T>&, const Tensor<T>&, T);             \
  template Q2VResult<T> q2v_interaction(const Tensor<T>&, const Tensor<T>&,                 \
                                        const Tensor<T>&, const LinearLayer<T>&,            \
                                        const GCNStack<T>&, T);                             \
  template BridgeResult<T> bridge_aggregate(const Tensor<T>&, const Tensor<T>&,             \
                                            const Tensor<T>&, const GCNStack<T>&, T);       \
  template DeliverResult<T> v2v_deliver(const Tensor<T>&, const Tensor<T>&,                 \
                                        const LinearLayer<T>&, T);                          \
  template DeliverResult<T> v2v_no_bridge(const Tensor<T>&, const Tensor<T>&,               \
                                          const LinearLayer<T>&, T);

BTA_INSTANTIATE(float)
BTA_INSTANTIATE(double)

#undef BTA_INSTANTIATE

}  // namespace bta
