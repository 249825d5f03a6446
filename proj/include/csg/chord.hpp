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

// Chord vocabulary: 12 roots x 4 qualities packed as root * 4 + quality,
// plus token 48 for "no chord". Timed intervals (.lab files) are sampled
// onto fixed-rate frames by the frame-midpoint rule.

#ifndef CSG_CHORD_HPP_
#define CSG_CHORD_HPP_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csg {

enum class Quality : int { kMajor = 0, kMinor = 1, kAugmented = 2, kDiminished = 3 };

inline constexpr int kNumRoots = 12;
inline constexpr int kNumQualities = 4;
inline constexpr int kNumChordTokens = kNumRoots * kNumQualities;  // 48
inline constexpr int kNoChordToken = kNumChordTokens;              // 48
inline constexpr double kDefaultFrameRate = 50.0;

struct ChordToken {
  int root = 0;  // 0 = C ... 11 = B
  Quality quality = Quality::kMajor;

  int id() const { return root * kNumQualities + static_cast<int>(quality); }
  static ChordToken from_id(int id);  // IndexError unless 0 <= id < 48
  bool operator==(const ChordToken&) const = default;
};

// Canonical sharp spelling, e.g. "A:min". Token 48 prints as "N".
std::string chord_name(const ChordToken& chord);
std::string token_name(int token);

// Accepts sharps and flats ("Db" normalizes to C#).
int parse_root(std::string_view name);
std::string root_name(int root);

// `<root>:<quality>` with quality in {maj, min, aug, dim}. Returns nullopt
// for the no-chord label "N".
std::optional<ChordToken> parse_chord_label(std::string_view label);
// Same, folded onto token ids (48 for "N").
int parse_chord_token(std::string_view label);

enum class Mode { kMajor, kMinor };
Mode parse_mode(std::string_view name);

// Diatonic triads for scale-degree digits 1-7, e.g. "6451" in C major is
// A:min F:maj G:maj C:maj. Minor keys use the natural minor scale.
std::vector<ChordToken> parse_progression(int key_root, Mode mode,
                                          std::string_view digits);

struct ChordInterval {
  double start = 0.0;
  double end = 0.0;
  std::string label;
};
using ChordIntervalList = std::vector<ChordInterval>;

// Sorts by start and rejects empty or overlapping spans and bad labels.
ChordIntervalList validate_intervals(ChordIntervalList intervals);

ChordIntervalList parse_lab(std::istream& in);
ChordIntervalList read_lab_file(const std::filesystem::path& path);

struct FrameSequence {
  std::vector<int> tokens;  // 0-47 chords, 48 no-chord
  double frame_rate_hz = kDefaultFrameRate;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const FrameSequence&) const = default;
};

// ceil(duration * rate), tolerant of representation error in the product.
std::size_t frame_count(double duration_seconds, double frame_rate_hz);

// Frame t covers [t / rate, (t + 1) / rate) and takes the chord whose
// half-open interval contains the frame midpoint; uncovered frames get 48.
FrameSequence quantize(const ChordIntervalList& intervals, double frame_rate_hz,
                       double total_duration);

int transpose_token(int token, int semitones);
FrameSequence transpose(const FrameSequence& seq, int semitones);

// One chord per `frames_per_chord` frames, cycling the progression until
// `total_frames` frames are filled.
FrameSequence progression_frames(std::span<const ChordToken> chords,
                                 std::size_t frames_per_chord,
                                 std::size_t total_frames,
                                 double frame_rate_hz = kDefaultFrameRate);

// Text form: a `frame_rate=<hz>` header line, then one token per line.
std::string format_frame_sequence(const FrameSequence& seq);
FrameSequence parse_frame_sequence(std::istream& in);
void write_frame_sequence(const std::filesystem::path& path, const FrameSequence& seq);
FrameSequence read_frame_sequence(const std::filesystem::path& path);

}  // namespace csg

#endif  // CSG_CHORD_HPP_
