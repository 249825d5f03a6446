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


#include <cmath>

#include <gtest/gtest.h>

#include "csg/chord.hpp"
#include "csg/error.hpp"
#include "csg/metrics.hpp"
#include "csg/synth.hpp"
#include "support/oracles.hpp"

namespace csg {
namespace {

using testing::Matrix;

std::vector<int> labels(std::initializer_list<const char*> names) {
  std::vector<int> out;
  for (const char* n : names) out.push_back(parse_chord_token(n));
  return out;
}

std::vector<int> random_tokens(Rng& rng, std::size_t n, int vocab) {
  std::vector<int> out(n);
  for (auto& t : out) t = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
  return out;
}

TEST(Sim, HandExample) {
  auto r = sim(labels({"C:maj", "C:maj", "A:min", "G:maj"}),
               labels({"D:maj", "D:maj", "B:min", "G:maj"}));
  EXPECT_EQ(r.best_shift, 2);
  EXPECT_DOUBLE_EQ(r.sim, 0.75);
  EXPECT_DOUBLE_EQ(r.per_shift_accuracy[0], 0.25);
}

TEST(Sim, IdentityAndTransposition) {
  Rng rng(1);
  FrameSequence x{random_tokens(rng, 300, 49)};
  auto self = sim(x, x);
  EXPECT_EQ(self.sim, 1.0);
  EXPECT_EQ(self.best_shift, 0);
  auto moved = sim(transpose(x, 5), x);
  EXPECT_EQ(moved.sim, 1.0);
  EXPECT_EQ(moved.best_shift, 7);
}

TEST(Sim, InvariantUnderGlobalShifts) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    FrameSequence p{random_tokens(rng, 64, 49)}, t{random_tokens(rng, 64, 49)};
    const double base = sim(p, t).sim;
    for (int k = -13; k <= 13; ++k) {
      EXPECT_EQ(sim(transpose(p, k), t).sim, base);
      EXPECT_EQ(sim(transpose(p, k), transpose(t, k)).sim, base);
    }
  }
}

TEST(Sim, NoChordHandling) {
  // Shared no-chord frames drop out; one-sided ones count as misses.
  EXPECT_DOUBLE_EQ(sim(std::vector<int>{48, 0, 4}, std::vector<int>{48, 0, 5}).sim, 0.5);
  EXPECT_DOUBLE_EQ(sim(std::vector<int>{48, 0}, std::vector<int>{0, 0}).sim, 0.5);
  EXPECT_DOUBLE_EQ(sim(std::vector<int>{48, 48}, std::vector<int>{48, 48}).sim, 1.0);
}

TEST(Sim, LengthMismatchIsContractError) {
  EXPECT_THROW(sim(std::vector<int>{0, 1}, std::vector<int>{0}), ContractError);
  EXPECT_THROW(sim(FrameSequence{{0}, 50.0}, FrameSequence{{0}, 25.0}), ContractError);
}

TEST(Sim, RandomBaselineStaysLow) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto a = random_tokens(rng, 10000, 48), b = random_tokens(rng, 10000, 48);
    EXPECT_LT(sim(a, b).sim, 0.06) << "seed " << seed;
  }
}

TEST(Sim, FormatListsEveryShift) {
  auto text = sim(labels({"C:maj"}), labels({"D:maj"})).format();
  EXPECT_NE(text.find("best_shift=2"), std::string::npos) << text;
  EXPECT_NE(text.find("sim=1"), std::string::npos) << text;
}

TEST(MajorityFilter, RemovesIsolatedSpikes) {
  std::vector<int> x = {1, 1, 1, 7, 1, 1, 2, 2, 2, 2};
  EXPECT_EQ(majority_filter(x, 5), std::vector<int>({1, 1, 1, 1, 1, 1, 2, 2, 2, 2}));
  EXPECT_EQ(majority_filter(x, 1), x);
}

TEST(Extraction, InvertsEmissionOnCleanStreams) {
  // A change on an odd frame that keeps the quality is invisible in the song
  // stream; apart from the truncated window at the very end, those are the
  // only frames allowed to miss.
  SynthSpec spec;
  spec.frames = 256;
  for (std::size_t i = 0; i < 20; ++i) {
    auto ex = generate_example(spec, "eval", i);
    const auto& truth = ex.chord_clean;
    auto got = extract_chords_from_tokens(ex.song, spec.emission());
    std::size_t misses = 0;
    for (std::size_t t = 0; t < got.size(); ++t) {
      if (got[t] == truth[t]) continue;
      ++misses;
      if (t + 2 >= got.size()) continue;
      ASSERT_EQ(t % 2, 1u) << "example " << i << " frame " << t;
      ASSERT_NE(truth[t], truth[t - 1]);
      ASSERT_EQ(truth[t] % 4, truth[t - 1] % 4);
      ASSERT_EQ(got[t], truth[t - 1]);
    }
    EXPECT_GE(sim(got, truth).sim, 1.0 - static_cast<double>(misses) / 256.0 - 1e-12);
    EXPECT_LE(misses, 8u);
  }
}

TEST(Extraction, UndecodableFramesBecomeNoChord) {
  EmissionRule rule;
  // Even frames need a root token, odd frames a quality token.
  std::vector<int> wrong_parity(20, 25);
  EXPECT_EQ(extract_chords_from_tokens(wrong_parity, rule, 1), std::vector<int>(20, 48));
}

FeatureStats stats(std::vector<double> mu, const Matrix& cov) {
  FeatureStats s;
  const auto d = static_cast<Eigen::Index>(mu.size());
  s.mean = Eigen::Map<Eigen::VectorXd>(mu.data(), d);
  s.cov.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) s.cov(i, j) = cov[i][j];
  return s;
}

Matrix random_psd(Rng& rng, std::size_t d, std::size_t rank) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix g(d, std::vector<double>(rank));
  for (auto& row : g)
    for (auto& v : row) v = u(rng);
  Matrix out(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < rank; ++k) out[i][j] += g[i][k] * g[j][k];
  return out;
}

std::vector<double> random_vec(Rng& rng, std::size_t d) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(d);
  for (auto& x : v) x = u(rng);
  return v;
}

TEST(Frechet, IdenticalStatsGiveZero) {
  Rng rng(3);
  auto cov = random_psd(rng, 4, 4);
  auto mu = random_vec(rng, 4);
  EXPECT_NEAR(frechet_distance(stats(mu, cov), stats(mu, cov)), 0.0, 1e-8);
}

TEST(Frechet, OneDimensionalAnalytic) {
  EXPECT_NEAR(frechet_distance(stats({0.0}, {{1.0}}), stats({1.0}, {{1.0}})), 1.0, 1e-8);
  // (mu diff)^2 + (sigma1 - sigma2)^2
  EXPECT_NEAR(frechet_distance(stats({0.0}, {{4.0}}), stats({0.0}, {{1.0}})), 1.0, 1e-8);
}

TEST(Frechet, SymmetricOverRandomPairs) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const std::size_t d = 1 + rng() % 6;
    auto a = stats(random_vec(rng, d), random_psd(rng, d, 1 + rng() % d));
    auto b = stats(random_vec(rng, d), random_psd(rng, d, 1 + rng() % d));
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    EXPECT_NEAR(ab, ba, 1e-8);
    EXPECT_GE(ab, 0.0);
  }
}

TEST(Frechet, MatchesJacobiOracle) {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    auto s1 = random_psd(rng, 3, 3), s2 = random_psd(rng, 3, 3);
    auto m1 = random_vec(rng, 3), m2 = random_vec(rng, 3);
    EXPECT_NEAR(frechet_distance(stats(m1, s1), stats(m2, s2)),
                testing::frechet_oracle(m1, s1, m2, s2), 1e-6);
  }
}

TEST(Frechet, JacobiOracleReconstructs) {
  Rng rng(6);
  auto m = random_psd(rng, 5, 5);
  auto [vals, vecs] = testing::jacobi_eigen(m);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double r = 0.0;
      for (std::size_t k = 0; k < 5; ++k) r += vecs[i][k] * vals[k] * vecs[j][k];
      EXPECT_NEAR(r, m[i][j], 1e-10);
    }
}

TEST(Frechet, RejectsMismatchAndNonPsd) {
  EXPECT_THROW(frechet_distance(stats({0.0}, {{1.0}}), stats({0.0, 0.0}, {{1, 0}, {0, 1}})),
               Error);
  EXPECT_THROW(frechet_distance(stats({0.0}, {{-1.0}}), stats({0.0}, {{1.0}})), ValidationError);
  EXPECT_THROW(stats({0.0, 0.0}, {{1, 0.5}, {0, 1}}).validate(), ValidationError);
}

TEST(FeatureStats, HistogramAndBigram) {
  auto h = extract_features({0, 0, 1, 2}, 3, FeatureExtractor::kHistogram);
  EXPECT_DOUBLE_EQ(h(0), 0.5);
  EXPECT_DOUBLE_EQ(h(2), 0.25);
  auto b = extract_features({0, 1, 0, 1}, 2, FeatureExtractor::kBigram);
  ASSERT_EQ(b.size(), 4);
  EXPECT_GT(b(1), 0.0);  // 0 -> 1
  EXPECT_EQ(b(0), 0.0);  // 0 -> 0 never occurs
  EXPECT_EQ(parse_feature_extractor("bigram"), FeatureExtractor::kBigram);
  EXPECT_THROW(parse_feature_extractor("vggish"), ParseError);
}

TEST(FeatureStats, UnbiasedCovariance) {
  Eigen::MatrixXd f(3, 1);
  f << 1.0, 2.0, 3.0;
  auto s = feature_stats(f);
  EXPECT_DOUBLE_EQ(s.mean(0), 2.0);
  EXPECT_DOUBLE_EQ(s.cov(0, 0), 1.0);
  EXPECT_THROW(feature_stats(Eigen::MatrixXd(1, 2)), ValidationError);
}

TEST(FeatureStats, SameSourceCloserThanDifferentSource) {
  Rng rng(8);
  std::vector<std::vector<int>> a, b, c;
  for (int i = 0; i < 40; ++i) {
    a.push_back(random_tokens(rng, 200, 8));
    b.push_back(random_tokens(rng, 200, 8));
    auto skew = random_tokens(rng, 200, 8);
    for (auto& t : skew) t = t < 4 ? 0 : t;
    c.push_back(skew);
  }
  auto sa = feature_stats(a, 8, FeatureExtractor::kHistogram);
  auto sb = feature_stats(b, 8, FeatureExtractor::kHistogram);
  auto sc = feature_stats(c, 8, FeatureExtractor::kHistogram);
  EXPECT_LT(frechet_distance(sa, sb), frechet_distance(sa, sc));
}

}  // namespace
}  // namespace csg
