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

#include "csg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "csg/error.hpp"

namespace csg {

namespace {

constexpr double kSymmetryTolerance = 1e-9;
constexpr double kEigenTolerance = 1e-8;

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

std::string SimReport::format() const {
  std::ostringstream os;
  os.precision(17);
  os << "best_shift=" << best_shift << '\n' << "sim=" << sim << '\n';
  os << "per_shift_accuracy=";
  for (int k = 0; k < kNumRoots; ++k) os << (k ? "," : "") << per_shift_accuracy[k];
  os << '\n';
  return os.str();
}

SimReport sim(const std::vector<int>& predicted, const std::vector<int>& target) {
  if (predicted.size() != target.size()) {
    throw ContractError("sim: length mismatch " + std::to_string(predicted.size()) + " vs " +
                        std::to_string(target.size()));
  }
  SimReport report;
  report.sim = -1.0;
  for (int k = 0; k < kNumRoots; ++k) {
    std::size_t hits = 0, counted = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const int p = transpose_token(predicted[i], k);
      const int t = target[i];
      if (p == kNoChordToken && t == kNoChordToken) continue;
      ++counted;
      hits += p == t;
    }
    const double acc = counted ? static_cast<double>(hits) / static_cast<double>(counted) : 1.0;
    report.per_shift_accuracy[k] = acc;
    if (acc > report.sim) {
      report.sim = acc;
      report.best_shift = k;
    }
  }
  return report;
}

SimReport sim(const FrameSequence& predicted, const FrameSequence& target) {
  if (predicted.frame_rate_hz != target.frame_rate_hz) {
    throw ContractError("sim: frame rate mismatch");
  }
  return sim(predicted.tokens, target.tokens);
}

std::vector<int> majority_filter(const std::vector<int>& tokens, std::size_t window) {
  if (window <= 1 || tokens.empty()) return tokens;
  const std::size_t half = window / 2;
  std::vector<int> out(tokens.size());
  std::map<int, int> counts;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    counts.clear();
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(tokens.size() - 1, i + half);
    for (std::size_t j = lo; j <= hi; ++j) ++counts[tokens[j]];
    int best_count = 0;
    for (const auto& [tok, c] : counts) best_count = std::max(best_count, c);
    if (counts[tokens[i]] == best_count) {
      out[i] = tokens[i];
      continue;
    }
    // Nearest winner, looking right before left.
    for (std::size_t d = 1; d <= half; ++d) {
      if (i + d <= hi && counts[tokens[i + d]] == best_count) {
        out[i] = tokens[i + d];
        break;
      }
      if (i >= lo + d && counts[tokens[i - d]] == best_count) {
        out[i] = tokens[i - d];
        break;
      }
    }
  }
  return out;
}

std::vector<int> extract_chords_from_tokens(const std::vector<int>& song, const EmissionRule& rule,
                                            std::size_t window) {
  const std::size_t n = song.size();
  std::vector<int> raw(n, kNoChordToken);
  for (std::size_t t = 0; t < n; ++t) {
    // Latest root-carrying and quality-carrying frames at or before t; the
    // first frame borrows its quality from frame 1.
    const std::size_t even = t - t % 2;
    const std::size_t odd = t % 2 ? t : (t > 0 ? t - 1 : 1);
    if (odd >= n) continue;
    const int root = rule.decode_root(song[even], even);
    const int quality = rule.decode_quality(song[odd], odd);
    if (root < 0 || quality < 0) continue;
    raw[t] = ChordToken{root, static_cast<Quality>(quality)}.id();
  }
  return majority_filter(raw, window);
}

// ---- Fréchet ---------------------------------------------------------------

void FeatureStats::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw ShapeError("feature stats: covariance is " + std::to_string(cov.rows()) + "x" +
                     std::to_string(cov.cols()) + " for mean of size " +
                     std::to_string(mean.size()));
  }
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  if (cov.size() && asym > kSymmetryTolerance) {
    throw ValidationError("feature stats: covariance not symmetric (max gap " +
                          std::to_string(asym) + ")");
  }
  if (cov.size()) {
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                          cov, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (lo < -kEigenTolerance) {
      throw ValidationError("feature stats: covariance not PSD (eigenvalue " +
                            std::to_string(lo) + ")");
    }
  }
}

namespace {

double sqrt_trace(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::MatrixXd rx = psd_sqrt(x);
  Eigen::MatrixXd inner = rx * y * rx;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim()) {
    throw ShapeError("frechet: dimension " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
  const Eigen::MatrixXd ca = 0.5 * (a.cov + a.cov.transpose());
  const Eigen::MatrixXd cb = 0.5 * (b.cov + b.cov.transpose());
  // tr((Sa Sb)^1/2) == tr((Sa^1/2 Sb Sa^1/2)^1/2), the latter symmetric PSD.
  // Both orderings are averaged so the result is exactly symmetric.
  const double cross = 0.5 * (sqrt_trace(ca, cb) + sqrt_trace(cb, ca));
  const double d = (a.mean - b.mean).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

FeatureExtractor parse_feature_extractor(std::string_view name) {
  if (name == "histogram") return FeatureExtractor::kHistogram;
  if (name == "bigram") return FeatureExtractor::kBigram;
  throw ParseError("unknown feature extractor '" + std::string(name) +
                   "' (expected histogram or bigram)");
}

Eigen::VectorXd extract_features(const std::vector<int>& tokens, std::size_t vocab,
                                 FeatureExtractor extractor) {
  auto check = [&](int t) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw IndexError("feature token " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    return static_cast<Eigen::Index>(t);
  };
  const auto v = static_cast<Eigen::Index>(vocab);
  if (extractor == FeatureExtractor::kHistogram) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(v);
    for (int t : tokens) f[check(t)] += 1.0;
    if (!tokens.empty()) f /= static_cast<double>(tokens.size());
    return f;
  }
  Eigen::VectorXd f = Eigen::VectorXd::Zero(v * v);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    f[check(tokens[i - 1]) * v + check(tokens[i])] += 1.0;
  }
  return f;
}

FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) {
    throw ValidationError("feature stats need at least 2 samples, got " +
                          std::to_string(features.rows()));
  }
  FeatureStats s;
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

FeatureStats feature_stats(const std::vector<std::vector<int>>& sequences, std::size_t vocab,
                           FeatureExtractor extractor) {
  if (sequences.size() < 2) {
    throw ValidationError("feature stats need at least 2 sequences");
  }
  const auto d = extract_features(sequences[0], vocab, extractor).size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(sequences.size()), d);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) =
        extract_features(sequences[i], vocab, extractor).transpose();
  }
  return feature_stats(rows);
}

}  // namespace csg
