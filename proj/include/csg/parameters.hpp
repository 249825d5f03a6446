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

#ifndef CSG_PARAMETERS_HPP_
#define CSG_PARAMETERS_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "csg/tensor.hpp"

namespace csg {

// Named learnable tensors in registration order.
template <typename T>
class ParameterStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> init);
  // Normal(0, stddev) draws from rng.
  Tensor<T> add_normal(const std::string& name, Shape shape, double stddev, Rng& rng);
  Tensor<T> add_constant(const std::string& name, Shape shape, T value);

  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Box-Muller normal draw built on raw 64-bit output, so values depend only
// on the generator state and not on the standard library's distributions.
double normal_sample(Rng& rng);

}  // namespace csg

#endif  // CSG_PARAMETERS_HPP_
