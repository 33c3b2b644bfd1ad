#include "bta/params.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace bta {

std::string branch_name(Branch b) {
  switch (b) {
    case Branch::appearance: return "appearance";
    case Branch::motion: return "motion";
    case Branch::question: return "question";
    case Branch::decoder: return "decoder";
  }
  return "?";
}

template <typename T>
Tensor<T> ParamStore<T>::create_weight(const std::string& name, std::size_t rows,
                                       std::size_t cols, Branch branch, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<T> data(rows * cols);
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return add(name, Tensor<T>({rows, cols}, std::move(data), true), branch);
}

template <typename T>
Tensor<T> ParamStore<T>::create_bias(const std::string& name, std::size_t size, Branch branch) {
  return add(name, Tensor<T>::zeros({size}, true), branch);
}

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> value, Branch branch) {
  if (contains(name)) throw std::logic_error("parameter '" + name + "' registered twice");
  entries_.push_back({name, value, branch});
  return value;
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

template <typename T>
Tensor<T> ParamStore<T>::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grads() {
  for (auto& e : entries_) e.value.zero_grad();
}

namespace {
template <typename T>
void fnv_mix(std::uint64_t& h, const Tensor<T>& t) {
  auto d = t.data();
  const auto* bytes = reinterpret_cast<const unsigned char*>(d.data());
  for (std::size_t i = 0; i < d.size() * sizeof(T); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
}
}  // namespace

template <typename T>
std::uint64_t ParamStore<T>::checksum() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& e : entries_) fnv_mix(h, e.value);
  return h;
}

template <typename T>
std::uint64_t ParamStore<T>::checksum(Branch branch) const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& e : entries_)
    if (e.branch == branch) fnv_mix(h, e.value);
  return h;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace bta
