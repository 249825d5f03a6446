// Copyright 2026 The CSG Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "csg/parameters.hpp"

#include <cmath>
#include <numbers>

#include "csg/error.hpp"

namespace csg {

double normal_sample(Rng& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Shape shape,
                                 std::vector<T> init) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  auto t = Tensor<T>::from_data(std::move(shape), std::move(init), true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
Tensor<T> ParameterStore<T>::add_normal(const std::string& name, Shape shape,
                                        double stddev, Rng& rng) {
  std::vector<T> init(shape_numel(shape));
  for (auto& v : init) v = static_cast<T>(stddev * normal_sample(rng));
  return add(name, std::move(shape), std::move(init));
}

template <typename T>
Tensor<T> ParameterStore<T>::add_constant(const std::string& name, Shape shape,
                                          T value) {
  std::vector<T> init(shape_numel(shape), value);
  return add(name, std::move(shape), std::move(init));
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParameterStore<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& entry : entries_) entry.second.zero_grad();
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace csg
