#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "caia/tensor.hpp"

namespace caia {

struct ParamEntry {
  Tensor value;
  Tensor grad;  // always same shape as value
  bool trainable = true;
};

/// Named parameter storage. Every entry carries a gradient buffer of the same
/// shape. Names are unique; lookups of unknown names throw instead of
/// defaulting. Iteration order is the lexicographic name order of std::map,
/// which keeps optimizer updates and reductions reproducible.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value, bool trainable = true) {
    if (entries_.count(name)) {
      throw std::invalid_argument("ParamStore::add: duplicate name '" + name + "'");
    }
    ParamEntry e;
    e.grad = Tensor(value.shape(), 0.0);
    e.value = std::move(value);
    e.trainable = trainable;
    entries_.emplace(name, std::move(e));
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  ParamEntry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    }
    return it->second;
  }

  const ParamEntry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    }
    return it->second;
  }

  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }
  const Tensor& grad(const std::string& name) const { return entry(name).grad; }

  void accumulate_grad(const std::string& name, const Tensor& contribution) {
    ParamEntry& e = entry(name);
    if (!contribution.same_shape(e.value)) {
      throw std::invalid_argument("ParamStore::accumulate_grad: shape mismatch for '" + name +
                                  "': expected " + shape_string(e.value.shape()) + ", got " +
                                  shape_string(contribution.shape()));
    }
    for (std::size_t i = 0; i < contribution.size(); ++i) e.grad[i] += contribution[i];
  }

  void accumulate_grad(const std::string& name, const std::vector<double>& contribution) {
    ParamEntry& e = entry(name);
    if (contribution.size() != e.value.size()) {
      throw std::invalid_argument("ParamStore::accumulate_grad: size mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < contribution.size(); ++i) e.grad[i] += contribution[i];
  }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(0.0);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

  template <class F>
  void for_each(F&& f) {
    for (auto& [name, e] : entries_) f(name, e);
  }

  template <class F>
  void for_each(F&& f) const {
    for (const auto& [name, e] : entries_) f(name, e);
  }

 private:
  std::map<std::string, ParamEntry> entries_;
};

}  // namespace caia
