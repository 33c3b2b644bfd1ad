#pragma once

#include <string>
#include <vector>

#include "bta/params.hpp"
#include "bta/tensor.hpp"

namespace bta {

enum class Activation { none, relu };

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act) {
  return act == Activation::relu ? relu(x) : x;
}

/// Affine map x·W + b followed by an optional activation.
template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // d_in × d_out
  Tensor<T> bias;    // d_out
  Activation activation = Activation::none;

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  static LinearLayer create(ParamStore<T>& store, const std::string& weight_name,
                            const std::string& bias_name, std::size_t d_in, std::size_t d_out,
                            Activation act, Branch branch, Rng& rng);
};

/// Applies the layer row-wise. Accepts [d_in] or [n × d_in].
template <typename T>
Tensor<T> linear_forward(const LinearLayer<T>& layer, const Tensor<T>& x);

/// Consecutive graph convolutions, Z = σ(D^{-1/2} Â D^{-1/2} X W) per layer.
template <typename T>
struct GCNStack {
  std::vector<Tensor<T>> weights;
  Activation activation = Activation::relu;

  /// `dims` holds d_0 .. d_layers, so dims.size() - 1 layers are created,
  /// named "<prefix>.0", "<prefix>.1", ...
  static GCNStack create(ParamStore<T>& store, const std::string& prefix,
                         const std::vector<std::size_t>& dims, Activation act, Branch branch,
                         Rng& rng);
};

/// `add_self_loops` selects Â = W + I (visual graphs) or Â = W (question
/// graph, whose adjacency already carries its diagonal).
template <typename T>
Tensor<T> gcn_forward(const GCNStack<T>& stack, const Tensor<T>& weight_matrix,
                      const Tensor<T>& x, bool add_self_loops = true);

/// Gate weights act on the concatenation [x, h] and are (d + h) × h.
template <typename T>
struct GruCellParams {
  Tensor<T> w_update, b_update;
  Tensor<T> w_reset, b_reset;
  Tensor<T> w_candidate, b_candidate;

  std::size_t input_dim() const { return w_update.dim(0) - hidden_dim(); }
  std::size_t hidden_dim() const { return w_update.dim(1); }

  static GruCellParams create(ParamStore<T>& store, const std::string& prefix,
                              std::size_t input_dim, std::size_t hidden_dim, Branch branch,
                              Rng& rng);
};

/// One GRU step. x_t is [d] (or 1×d), h_prev is [h]; returns [h].
template <typename T>
Tensor<T> gru_cell(const GruCellParams<T>& cell, const Tensor<T>& x_t, const Tensor<T>& h_prev);

template <typename T>
struct BiGRUEncoder {
  GruCellParams<T> forward_cell;
  GruCellParams<T> backward_cell;
  LinearLayer<T> projection;  // 2·hidden → d′

  std::size_t hidden_dim() const { return forward_cell.hidden_dim(); }

  static BiGRUEncoder create(ParamStore<T>& store, std::size_t embed_dim,
                             std::size_t model_dim, Rng& rng);
};

/// Per-step [forward hidden; backward hidden], K × 2h, before projection.
template <typename T>
Tensor<T> bigru_states(const BiGRUEncoder<T>& enc, const Tensor<T>& embeddings);

/// K × embed_dim word embeddings → K × d′ question node features.
template <typename T>
Tensor<T> bigru_encode(const BiGRUEncoder<T>& enc, const Tensor<T>& embeddings);

}  // namespace bta
