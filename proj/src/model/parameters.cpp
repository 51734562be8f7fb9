// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "brainformer/model/parameters.hpp"

#include <cmath>

#include "brainformer/error.hpp"

namespace brainformer::model {

template <typename T>
Tensor<T> ParameterSet<T>::add(std::string name, Shape shape, const std::vector<double>& values, bool no_decay) {
  if (find(name)) throw UsageError("ParameterSet: duplicate parameter '" + name + "'");
  std::vector<T> cast(values.begin(), values.end());
  auto t = Tensor<T>::parameter(std::move(shape), std::move(cast));
  entries_.push_back({std::move(name), t, no_decay});
  return t;
}

template <typename T>
const NamedParameter<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<double> uniform_values(Rng& rng, std::size_t n, double bound) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

std::vector<double> kaiming_uniform(Rng& rng, std::size_t n, std::size_t fan_in) {
  return uniform_values(rng, n, std::sqrt(6.0 / static_cast<double>(fan_in)));
}

std::vector<double> xavier_uniform(Rng& rng, std::size_t n, std::size_t fan_in, std::size_t fan_out) {
  return uniform_values(rng, n, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace brainformer::model
