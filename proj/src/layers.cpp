#include "bta/layers.hpp"

#include <cmath>

namespace bta {

template <typename T>
LinearLayer<T> LinearLayer<T>::create(ParamStore<T>& store, const std::string& weight_name,
                                      const std::string& bias_name, std::size_t d_in,
                                      std::size_t d_out, Activation act, Branch branch,
                                      Rng& rng) {
  LinearLayer layer;
  layer.weight = store.create_weight(weight_name, d_in, d_out, branch, rng);
  layer.bias = store.create_bias(bias_name, d_out, branch);
  layer.activation = act;
  return layer;
}

template <typename T>
Tensor<T> linear_forward(const LinearLayer<T>& layer, const Tensor<T>& x) {
  if (x.rank() == 1) {
    auto y = linear_forward(layer, reshape(x, {1, x.dim(0)}));
    return reshape(y, {layer.out_dim()});
  }
  if (x.rank() != 2 || x.dim(1) != layer.in_dim()) {
    throw DimensionError("linear_forward: input " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(layer.weight.shape()));
  }
  return activate(add_bias_rows(matmul(x, layer.weight), layer.bias), layer.activation);
}

template <typename T>
GCNStack<T> GCNStack<T>::create(ParamStore<T>& store, const std::string& prefix,
                                const std::vector<std::size_t>& dims, Activation act,
                                Branch branch, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("GCN stack needs at least one layer");
  GCNStack stack;
  stack.activation = act;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    stack.weights.push_back(
        store.create_weight(prefix + "." + std::to_string(i), dims[i], dims[i + 1], branch, rng));
  }
  return stack;
}

template <typename T>
Tensor<T> gcn_forward(const GCNStack<T>& stack, const Tensor<T>& weight_matrix,
                      const Tensor<T>& x, bool add_self_loops) {
  if (weight_matrix.rank() != 2 || weight_matrix.dim(0) != weight_matrix.dim(1)) {
    throw DimensionError("gcn_forward: weight matrix must be square, got " +
                         shape_str(weight_matrix.shape()));
  }
  if (x.rank() != 2 || x.dim(0) != weight_matrix.dim(0)) {
    throw DimensionError("gcn_forward: node features " + shape_str(x.shape()) +
                         " do not match weight matrix " + shape_str(weight_matrix.shape()));
  }
  for (auto v : weight_matrix.data()) {
    if (!std::isfinite(v)) throw NumericError("gcn_forward: non-finite edge weight");
  }
  const std::size_t n = weight_matrix.dim(0);
  auto a_hat = add_self_loops ? add(weight_matrix, Tensor<T>::eye(n)) : weight_matrix;
  auto op = degree_normalize(a_hat);
  auto h = x;
  for (const auto& w : stack.weights) h = activate(matmul(matmul(op, h), w), stack.activation);
  return h;
}

template <typename T>
GruCellParams<T> GruCellParams<T>::create(ParamStore<T>& store, const std::string& prefix,
                                          std::size_t input_dim, std::size_t hidden_dim,
                                          Branch branch, Rng& rng) {
  GruCellParams c;
  const std::size_t rows = input_dim + hidden_dim;
  c.w_update = store.create_weight(prefix + ".W_z", rows, hidden_dim, branch, rng);
  c.b_update = store.create_bias(prefix + ".b_z", hidden_dim, branch);
  c.w_reset = store.create_weight(prefix + ".W_r", rows, hidden_dim, branch, rng);
  c.b_reset = store.create_bias(prefix + ".b_r", hidden_dim, branch);
  c.w_candidate = store.create_weight(prefix + ".W_h", rows, hidden_dim, branch, rng);
  c.b_candidate = store.create_bias(prefix + ".b_h", hidden_dim, branch);
  return c;
}

template <typename T>
Tensor<T> gru_cell(const GruCellParams<T>& cell, const Tensor<T>& x_t, const Tensor<T>& h_prev) {
  const std::size_t d = cell.input_dim(), h = cell.hidden_dim();
  if (x_t.numel() != d || h_prev.numel() != h) {
    throw DimensionError("gru_cell: got x " + shape_str(x_t.shape()) + " and h " +
                         shape_str(h_prev.shape()) + ", cell expects [" + std::to_string(d) +
                         "] and [" + std::to_string(h) + "]");
  }
  auto x = reshape(x_t, {1, d});
  auto hp = reshape(h_prev, {1, h});
  auto xh = concat_last_axis<T>({x, hp});
  auto z = sigmoid(add_bias_rows(matmul(xh, cell.w_update), cell.b_update));
  auto r = sigmoid(add_bias_rows(matmul(xh, cell.w_reset), cell.b_reset));
  auto xrh = concat_last_axis<T>({x, mul(r, hp)});
  auto cand = tanh(add_bias_rows(matmul(xrh, cell.w_candidate), cell.b_candidate));
  // (1 - z)∘h + z∘h̃ written as h + z∘(h̃ - h)
  auto next = add(hp, mul(z, sub(cand, hp)));
  return reshape(next, {h});
}

template <typename T>
BiGRUEncoder<T> BiGRUEncoder<T>::create(ParamStore<T>& store, std::size_t embed_dim,
                                        std::size_t model_dim, Rng& rng) {
  if (model_dim % 2 != 0) throw std::invalid_argument("model dimension must be even");
  BiGRUEncoder enc;
  const std::size_t hidden = model_dim / 2;
  enc.forward_cell = GruCellParams<T>::create(store, "gru.fwd", embed_dim, hidden,
                                              Branch::question, rng);
  enc.backward_cell = GruCellParams<T>::create(store, "gru.bwd", embed_dim, hidden,
                                               Branch::question, rng);
  enc.projection = LinearLayer<T>::create(store, "W_u", "b_u", 2 * hidden, model_dim,
                                          Activation::none, Branch::question, rng);
  return enc;
}

template <typename T>
Tensor<T> bigru_states(const BiGRUEncoder<T>& enc, const Tensor<T>& embeddings) {
  if (embeddings.rank() != 2 || embeddings.dim(0) == 0) {
    throw DimensionError("bigru: empty question or bad embedding shape " +
                         shape_str(embeddings.shape()));
  }
  const std::size_t k = embeddings.dim(0), h = enc.hidden_dim();
  std::vector<Tensor<T>> fwd(k), bwd(k);
  auto state = Tensor<T>::zeros({h});
  for (std::size_t t = 0; t < k; ++t) {
    state = gru_cell(enc.forward_cell, slice_rows(embeddings, t, t + 1), state);
    fwd[t] = state;
  }
  state = Tensor<T>::zeros({h});
  for (std::size_t t = k; t-- > 0;) {
    state = gru_cell(enc.backward_cell, slice_rows(embeddings, t, t + 1), state);
    bwd[t] = state;
  }
  std::vector<Tensor<T>> rows;
  rows.reserve(k);
  for (std::size_t t = 0; t < k; ++t) rows.push_back(concat_last_axis<T>({fwd[t], bwd[t]}));
  return concat_rows(rows);
}

template <typename T>
Tensor<T> bigru_encode(const BiGRUEncoder<T>& enc, const Tensor<T>& embeddings) {
  return linear_forward(enc.projection, bigru_states(enc, embeddings));
}

#define BTA_INSTANTIATE(T)                                                                 \
  template struct LinearLayer<T>;                                                          \
  template struct GCNStack<T>;                                                             \
  template struct GruCellParams<T>;                                                        \
  template struct BiGRUEncoder<T>;                                                         \
  template Tensor<T> linear_forward(const LinearLayer<T>&, const Tensor<T>&);              \
  template Tensor<T> gcn_forward(const GCNStack<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                 bool);                                                    \
  template Tensor<T> gru_cell(const GruCellParams<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> bigru_states(const BiGRUEncoder<T>&, const Tensor<T>&);               \
  template Tensor<T> bigru_encode(const BiGRUEncoder<T>&, const Tensor<T>&);

BTA_INSTANTIATE(float)
BTA_INSTANTIATE(double)

#undef BTA_INSTANTIATE

}  // namespace bta
