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

#ifndef CSG_IO_HPP_
#define CSG_IO_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace csg {

// Writes to `<path>.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// Flat `key=value` text; '#' starts a comment line.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  std::string get(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  const std::map<std::string, std::string>& values() const { return values_; }
  std::string format() const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<int> parse_int_list(std::string_view text);
std::string join_ints(const std::vector<int>& values, char separator = ' ');

}  // namespace csg

#endif  // CSG_IO_HPP_
