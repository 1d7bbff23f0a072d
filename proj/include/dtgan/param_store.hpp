#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dtgan/diff_array.hpp"

namespace dtgan {

// Named collection of trainable arrays. Insertion order is part of the
// contract: optimizers, checkpoints and gradient clipping all walk the
// parameters in the order they were registered, which keeps runs with the
// same seed bitwise identical.
class ParameterStore {
 public:
  std::uint64_t rng_seed = 0;

  DiffArray& add(const std::string& name, DiffArray value) {
    if (index_.count(name)) {
      throw std::invalid_argument("ParameterStore::add: duplicate parameter '" +
                                  name + "'");
    }
    value.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(value));
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  DiffArray& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::invalid_argument("ParameterStore::get: unknown parameter '" +
                                  name + "'");
    }
    return entries_[it->second].second;
  }

  const DiffArray& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::invalid_argument("ParameterStore::get: unknown parameter '" +
                                  name + "'");
    }
    return entries_[it->second].second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

  std::vector<std::pair<std::string, DiffArray>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, DiffArray>>& entries() const {
    return entries_;
  }

  void zero_grads() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  void scale_grads(double c) {
    for (auto& e : entries_)
      for (auto& g : e.second.mutable_grad()) g *= c;
  }

 private:
  std::vector<std::pair<std::string, DiffArray>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dtgan
