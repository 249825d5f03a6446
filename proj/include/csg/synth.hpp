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

// Synthetic "toy song" task.
//
// Each example carries a diatonic chord schedule (random key, mode and
// four-degree progression, random segment lengths), a piecewise-constant
// lyric stream, and vocal/song streams emitted from them:
//
//   style_0 = lyric_0 mod 2
//   style_t = style_{t-1} xor [lyric_t != lyric_{t-1}]
//   song_t  = root_t + 12 style_t           on even frames   (0..23)
//             24 + quality_t + 4 style_t    on odd frames    (24..31)
//   vocal_t = (lyric_t + 16 style_t) mod vocal_vocab
//
// so every song frame names half of the current chord and two consecutive
// frames name all of it. Training inputs see a corrupted chord stream in
// which a noise_rate fraction of frames holds a uniformly drawn wrong chord.

#ifndef CSG_SYNTH_HPP_
#define CSG_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "csg/io.hpp"
#include "csg/model.hpp"

namespace csg {

struct EmissionRule {
  std::size_t song_vocab = 32;
  std::size_t vocal_vocab = 32;

  static constexpr int kRootTokens = 24;    // root + 12 * style
  static constexpr int kStyleStride = 16;  // vocal offset per style bit

  void validate() const;
  int next_style(int prev_style, int lyric, int prev_lyric, bool first) const;
  // No-chord (48) emits the opposite half's token so decoding flags it.
  int song_token(int chord, int style, std::size_t frame) const;
  int vocal_token(int lyric, int style) const;

  // -1 when the token cannot carry a root (or quality) at this frame parity.
  int decode_root(int song_token, std::size_t frame) const;
  int decode_quality(int song_token, std::size_t frame) const;
};

struct SynthSpec {
  std::size_t n_examples = 256;
  std::size_t eval_examples = 32;
  std::size_t frames = 256;
  std::size_t min_segment = 24;  // chord segment length range, frames
  std::size_t max_segment = 64;
  std::size_t min_lyric_segment = 4;
  std::size_t max_lyric_segment = 12;
  std::size_t lyric_vocab = 32;
  std::size_t vocal_vocab = 32;
  std::size_t song_vocab = 32;
  double noise_rate = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  EmissionRule emission() const { return EmissionRule{song_vocab, vocal_vocab}; }
  // Keys are the field names prefixed with `synth.`.
  void write_to(KeyValueConfig& kv) const;
  static SynthSpec from(const KeyValueConfig& kv);
};

struct SynthExample {
  std::vector<int> chord_clean;
  std::vector<int> chord_noisy;
  std::vector<int> lyric;
  std::vector<int> vocal;
  std::vector<int> song;

  std::size_t frames() const { return chord_clean.size(); }
  // Training view: conditions on the corrupted chords.
  SongExample training_example() const;
};

struct Dataset {
  SynthSpec spec;
  std::string split;
  std::vector<SynthExample> examples;
};

struct DatasetSplits {
  Dataset train;
  Dataset eval;
};

// Pure function of the spec; every example draws from its own generator
// keyed by (seed, split, index).
DatasetSplits generate_dataset(const SynthSpec& spec);

SynthExample generate_example(const SynthSpec& spec, const std::string& split,
                              std::size_t index);

// Uniform replacement by one of the other 47 chords.
std::vector<int> corrupt_chords(const std::vector<int>& clean, double noise_rate, Rng& rng);

std::string format_dataset(const Dataset& dataset);
Dataset parse_dataset(std::istream& in);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace csg

#endif  // CSG_SYNTH_HPP_
