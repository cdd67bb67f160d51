#pragma once

#include <string>
#include <utility>
#include <vector>

#include "projsynth/error.hpp"
#include "projsynth/tensor.hpp"

namespace projsynth {

/// Ordered collection of uniquely named tensors. Tensors are shared handles,
/// so mutating an entry's data updates the owning model in place.
template <typename T>
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  const Tensor<T>& add(std::string name, Tensor<T> tensor) {
    if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(tensor));
    return entries_.back().second;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : entries_)
      if (n == name) return &t;
    return nullptr;
  }
  Tensor<T>* find(const std::string& name) {
    for (auto& [n, t] : entries_)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor<T>& at(const std::string& name) const {
    if (auto* t = find(name)) return *t;
    throw ConfigError("no parameter named '" + name + "'");
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
};

}  // namespace projsynth
