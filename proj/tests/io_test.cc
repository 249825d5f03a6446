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


#include <filesystem>

#include <gtest/gtest.h>

#include "csg/error.hpp"
#include "csg/io.hpp"
#include "csg/parameters.hpp"

namespace csg {
namespace {

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

TEST(KeyValueConfig, ParsesCommentsAndWhitespace) {
  auto kv = KeyValueConfig::parse("# header\n a = 1 \n\nb=two words\nc=\n");
  EXPECT_EQ(kv.get("a", ""), "1");
  EXPECT_EQ(kv.get("b", ""), "two words");
  EXPECT_TRUE(kv.has("c"));
  EXPECT_EQ(kv.get("missing", "fallback"), "fallback");
  EXPECT_EQ(kv.get_int("a", 0), 1);
  EXPECT_EQ(kv.get_int("missing", 7), 7);
}

TEST(KeyValueConfig, ReportsLineNumbers) {
  try {
    KeyValueConfig::parse("a=1\nno equals here\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(KeyValueConfig::parse("=3\n"), ParseError);
}

TEST(KeyValueConfig, RejectsMalformedNumbers) {
  auto kv = KeyValueConfig::parse("n=12x\nd=0.5.1\nok=2.5e-3\n");
  EXPECT_THROW(kv.get_int("n", 0), ParseError);
  EXPECT_THROW(kv.get_double("d", 0), ParseError);
  EXPECT_DOUBLE_EQ(kv.get_double("ok", 0), 2.5e-3);
}

TEST(KeyValueConfig, FormatRoundTrips) {
  KeyValueConfig kv;
  kv.set("z.last", "3");
  kv.set("a.first", "x y");
  auto back = KeyValueConfig::parse(kv.format());
  EXPECT_EQ(back.values(), kv.values());
}

TEST(Files, AtomicWriteAndRead) {
  const auto path = temp_path("csg_io_test.txt");
  write_file_atomic(path, "hello\n");
  EXPECT_EQ(read_file(path), "hello\n");
  write_file_atomic(path, "replaced");
  EXPECT_EQ(read_file(path), "replaced");
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);
  EXPECT_THROW(read_file(path), IoError);
}

TEST(Files, CreatesParentsButFailsUnderAFile) {
  const auto dir = temp_path("csg_io_test_dir");
  std::filesystem::remove_all(dir);
  write_file_atomic(dir / "nested" / "f.txt", "x");
  EXPECT_EQ(read_file(dir / "nested" / "f.txt"), "x");
  EXPECT_THROW(write_file_atomic(dir / "nested" / "f.txt" / "g.txt", "y"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(IntList, ParsesSeparators) {
  EXPECT_EQ(parse_int_list("1, 2 3\n-4"), std::vector<int>({1, 2, 3, -4}));
  EXPECT_TRUE(parse_int_list("  ").empty());
  EXPECT_THROW(parse_int_list("1 x"), ParseError);
  EXPECT_EQ(join_ints({1, 2, 3}, ','), "1,2,3");
}

TEST(ParameterStore, RegistersAndLooksUp) {
  ParameterStore<float> store;
  Rng rng(1);
  store.add_constant("a", {2, 3}, 1.5f);
  store.add_normal("b", {4}, 0.1, rng);
  EXPECT_EQ(store.size(), 2u);
  EXPECT_EQ(store.total_values(), 10u);
  EXPECT_EQ(store.get("a").data()[5], 1.5f);
  EXPECT_TRUE(store.get("b").requires_grad());
  EXPECT_THROW(store.get("c"), Error);
  EXPECT_THROW(store.add_constant("a", {1}, 0.0f), Error);
}

TEST(ParameterStore, NormalInitHasRequestedScale) {
  ParameterStore<double> store;
  Rng rng(2);
  auto w = store.add_normal("w", {100, 100}, 0.5, rng);
  double sum = 0.0, sq = 0.0;
  for (double v : w.data()) {
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / 1e4, 0.0, 0.02);
  EXPECT_NEAR(std::sqrt(sq / 1e4), 0.5, 0.02);
}

}  // namespace
}  // namespace csg
