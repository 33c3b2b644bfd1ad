#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bta/random.hpp"
#include "bta/tensor.hpp"

namespace bta {

/// Which part of the network a parameter belongs to. Used by the ablation
/// audits ("w/o appearance" must leave every appearance parameter untouched).
enum class Branch { appearance, motion, question, decoder };

std::string branch_name(Branch b);

template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> value;
  Branch branch;
};

/// Every learnable tensor of a model, keyed by symbol name. Insertion order is
/// the canonical order for checkpoints and optimizer state.
template <typename T>
class ParamStore {
 public:
  /// Weight matrix with uniform(-1/sqrt(rows), 1/sqrt(rows)) entries.
  Tensor<T> create_weight(const std::string& name, std::size_t rows, std::size_t cols,
                          Branch branch, Rng& rng);
  Tensor<T> create_bias(const std::string& name, std::size_t size, Branch branch);
  Tensor<T> add(const std::string& name, Tensor<T> value, Branch branch);

  bool contains(const std::string& name) const;
  Tensor<T> get(const std::string& name) const;
  const std::vector<ParamEntry<T>>& entries() const { return entries_; }
  std::vector<ParamEntry<T>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  void zero_grads();
  /// FNV-1a over the raw bytes of every parameter (optionally one branch only).
  std::uint64_t checksum() const;
  std::uint64_t checksum(Branch branch) const;

 private:
  std::vector<ParamEntry<T>> entries_;
};

}  // namespace bta
