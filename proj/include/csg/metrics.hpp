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

#ifndef CSG_METRICS_HPP_
#define CSG_METRICS_HPP_

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "csg/chord.hpp"
#include "csg/synth.hpp"

namespace csg {

struct SimReport {
  int best_shift = 0;
  double sim = 0.0;
  std::array<double, kNumRoots> per_shift_accuracy{};

  // key=value lines
  std::string format() const;
};

// Chord accuracy under the best global key shift of `predicted`. Frames
// where both streams hold no-chord are skipped; a one-sided no-chord is a
// miss. Ties between shifts resolve to the smallest shift.
SimReport sim(const FrameSequence& predicted, const FrameSequence& target);
SimReport sim(const std::vector<int>& predicted, const std::vector<int>& target);

// Sliding-window mode; ties keep the center value when it is among the
// winners, otherwise the winner nearest the center (right side first).
std::vector<int> majority_filter(const std::vector<int>& tokens, std::size_t window);

inline constexpr std::size_t kDefaultMajorityWindow = 5;

// Inverts the emission rule: each frame takes its root from the latest even
// frame and its quality from the latest odd frame, so a chord change leaves
// at most one ambiguous frame. Undecodable frames become no-chord.
std::vector<int> extract_chords_from_tokens(const std::vector<int>& song_tokens,
                                            const EmissionRule& rule,
                                            std::size_t window = kDefaultMajorityWindow);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  void validate() const;
};

enum class FeatureExtractor { kHistogram, kBigram };

FeatureExtractor parse_feature_extractor(std::string_view name);

// Normalized token histogram [vocab] or bigram counts [vocab * vocab].
Eigen::VectorXd extract_features(const std::vector<int>& tokens, std::size_t vocab,
                                 FeatureExtractor extractor);

// Mean and unbiased covariance of per-sequence features; needs two or
// more sequences.
FeatureStats feature_stats(const std::vector<std::vector<int>>& sequences, std::size_t vocab,
                           FeatureExtractor extractor);
FeatureStats feature_stats(const Eigen::MatrixXd& features);  // one row per sample

double frechet_distance(const FeatureStats& a, const FeatureStats& b);

}  // namespace csg

#endif  // CSG_METRICS_HPP_
