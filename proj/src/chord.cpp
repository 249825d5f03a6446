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

#include "csg/chord.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "csg/error.hpp"
#include "csg/io.hpp"

namespace csg {

namespace {

constexpr std::array<const char*, kNumRoots> kRootNames = {
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"};
constexpr std::array<const char*, kNumQualities> kQualityNames = {"maj", "min", "aug",
                                                                  "dim"};

constexpr std::array<int, 7> kMajorOffsets = {0, 2, 4, 5, 7, 9, 11};
constexpr std::array<Quality, 7> kMajorQualities = {
    Quality::kMajor, Quality::kMinor, Quality::kMinor,     Quality::kMajor,
    Quality::kMajor, Quality::kMinor, Quality::kDiminished};
constexpr std::array<int, 7> kMinorOffsets = {0, 2, 3, 5, 7, 8, 10};
constexpr std::array<Quality, 7> kMinorQualities = {
    Quality::kMinor, Quality::kDiminished, Quality::kMajor, Quality::kMinor,
    Quality::kMinor, Quality::kMajor,      Quality::kMajor};

int mod12(int v) { return ((v % kNumRoots) + kNumRoots) % kNumRoots; }

int natural_pitch(char letter) {
  switch (letter) {
    case 'C': return 0;
    case 'D': return 2;
    case 'E': return 4;
    case 'F': return 5;
    case 'G': return 7;
    case 'A': return 9;
    case 'B': return 11;
    default: return -1;
  }
}

// Parses a root at the front of `s`; returns characters consumed or throws.
int parse_root_prefix(std::string_view s, std::string_view whole, int* root) {
  if (s.empty() || natural_pitch(s[0]) < 0) {
    throw ParseError("unknown chord root '" + std::string(s.substr(0, 1)) +
                     "' at position 0 in '" + std::string(whole) + "'");
  }
  int pitch = natural_pitch(s[0]);
  std::size_t used = 1;
  if (s.size() > 1 && s[1] == '#') {
    ++pitch;
    ++used;
  } else if (s.size() > 1 && s[1] == 'b') {
    --pitch;
    ++used;
  }
  *root = mod12(pitch);
  return static_cast<int>(used);
}

}  // namespace

ChordToken ChordToken::from_id(int id) {
  if (id < 0 || id >= kNumChordTokens) {
    throw IndexError("chord token id " + std::to_string(id) + " outside 0-47");
  }
  return ChordToken{id / kNumQualities, static_cast<Quality>(id % kNumQualities)};
}

std::string chord_name(const ChordToken& chord) {
  return std::string(kRootNames.at(static_cast<std::size_t>(chord.root))) + ":" +
         kQualityNames.at(static_cast<std::size_t>(chord.quality));
}

std::string token_name(int token) {
  if (token == kNoChordToken) return "N";
  return chord_name(ChordToken::from_id(token));
}

std::string root_name(int root) { return kRootNames.at(static_cast<std::size_t>(mod12(root))); }

int parse_root(std::string_view name) {
  int root = 0;
  const int used = parse_root_prefix(name, name, &root);
  if (static_cast<std::size_t>(used) != name.size()) {
    throw ParseError("unexpected '" + std::string(name.substr(used)) + "' at position " +
                     std::to_string(used) + " in root '" + std::string(name) + "'");
  }
  return root;
}

std::optional<ChordToken> parse_chord_label(std::string_view label) {
  if (label == "N") return std::nullopt;
  int root = 0;
  const auto used = static_cast<std::size_t>(parse_root_prefix(label, label, &root));
  if (used >= label.size() || label[used] != ':') {
    throw ParseError("expected ':' at position " + std::to_string(used) + " in '" +
                     std::string(label) + "'");
  }
  const auto quality = label.substr(used + 1);
  for (std::size_t q = 0; q < kQualityNames.size(); ++q) {
    if (quality == kQualityNames[q]) {
      return ChordToken{root, static_cast<Quality>(q)};
    }
  }
  throw ParseError("unknown chord quality '" + std::string(quality) + "' at position " +
                   std::to_string(used + 1) + " in '" + std::string(label) + "'");
}

int parse_chord_token(std::string_view label) {
  auto chord = parse_chord_label(label);
  return chord ? chord->id() : kNoChordToken;
}

Mode parse_mode(std::string_view name) {
  if (name == "major" || name == "maj") return Mode::kMajor;
  if (name == "minor" || name == "min") return Mode::kMinor;
  throw ParseError("unknown mode '" + std::string(name) + "' (expected major or minor)");
}

std::vector<ChordToken> parse_progression(int key_root, Mode mode,
                                          std::string_view digits) {
  if (key_root < 0 || key_root >= kNumRoots) {
    throw ParseError("key root " + std::to_string(key_root) + " outside 0-11");
  }
  if (digits.empty()) throw ParseError("empty progression");
  const auto& offsets = mode == Mode::kMajor ? kMajorOffsets : kMinorOffsets;
  const auto& qualities = mode == Mode::kMajor ? kMajorQualities : kMinorQualities;
  std::vector<ChordToken> out;
  out.reserve(digits.size());
  for (std::size_t i = 0; i < digits.size(); ++i) {
    const char c = digits[i];
    if (c < '1' || c > '7') {
      throw ParseError("scale degree '" + std::string(1, c) + "' at position " +
                       std::to_string(i) + " is not in 1-7");
    }
    const auto degree = static_cast<std::size_t>(c - '1');
    out.push_back(ChordToken{mod12(key_root + offsets[degree]), qualities[degree]});
  }
  return out;
}

ChordIntervalList validate_intervals(ChordIntervalList intervals) {
  for (const auto& iv : intervals) {
    if (!(iv.start >= 0.0) || !(iv.end > iv.start)) {
      std::ostringstream os;
      os << "invalid interval [" << iv.start << ", " << iv.end << ") '" << iv.label << "'";
      throw ValidationError(os.str());
    }
    parse_chord_token(iv.label);
  }
  std::stable_sort(intervals.begin(), intervals.end(),
                   [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < intervals.size(); ++i) {
    const auto& prev = intervals[i - 1];
    const auto& cur = intervals[i];
    if (cur.start < prev.end) {
      std::ostringstream os;
      os << "overlapping intervals [" << prev.start << ", " << prev.end << ") '"
         << prev.label << "' and [" << cur.start << ", " << cur.end << ") '"
         << cur.label << "'";
      throw ValidationError(os.str());
    }
  }
  return intervals;
}

ChordIntervalList parse_lab(std::istream& in) {
  ChordIntervalList out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string start_s;
    if (!(ls >> start_s) || start_s.front() == '#') continue;
    ChordInterval iv;
    std::string end_s, extra;
    if (!(ls >> end_s >> iv.label) || (ls >> extra)) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected 'start end label', got '" + line + "'");
    }
    try {
      std::size_t u1 = 0, u2 = 0;
      iv.start = std::stod(start_s, &u1);
      iv.end = std::stod(end_s, &u2);
      if (u1 != start_s.size() || u2 != end_s.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) + ": bad time value in '" +
                       line + "'");
    }
    try {
      parse_chord_token(iv.label);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": cannot parse label '" +
                       iv.label + "': " + e.what());
    }
    out.push_back(std::move(iv));
  }
  return validate_intervals(std::move(out));
}

ChordIntervalList read_lab_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_lab(in);
}

std::size_t frame_count(double duration_seconds, double frame_rate_hz) {
  const double x = duration_seconds * frame_rate_hz;
  if (x <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

FrameSequence quantize(const ChordIntervalList& intervals, double frame_rate_hz,
                       double total_duration) {
  if (!(frame_rate_hz > 0.0)) {
    throw ValidationError("frame rate must be positive, got " +
                          std::to_string(frame_rate_hz));
  }
  if (!(total_duration >= 0.0)) {
    throw ValidationError("duration must be non-negative");
  }
  const auto sorted = validate_intervals(intervals);
  if (!sorted.empty() && sorted.back().end > total_duration + 1e-9) {
    std::ostringstream os;
    os << "interval ending at " << sorted.back().end << " exceeds duration "
       << total_duration;
    throw ValidationError(os.str());
  }
  FrameSequence seq;
  seq.frame_rate_hz = frame_rate_hz;
  seq.tokens.assign(frame_count(total_duration, frame_rate_hz), kNoChordToken);
  std::size_t cursor = 0;
  for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
    const double mid = (static_cast<double>(t) + 0.5) / frame_rate_hz;
    while (cursor < sorted.size() && sorted[cursor].end <= mid) ++cursor;
    if (cursor < sorted.size() && sorted[cursor].start <= mid) {
      seq.tokens[t] = parse_chord_token(sorted[cursor].label);
    }
  }
  return seq;
}

int transpose_token(int token, int semitones) {
  if (token == kNoChordToken) return token;
  auto chord = ChordToken::from_id(token);
  chord.root = mod12(chord.root + semitones);
  return chord.id();
}

FrameSequence transpose(const FrameSequence& seq, int semitones) {
  FrameSequence out = seq;
  for (auto& t : out.tokens) t = transpose_token(t, semitones);
  return out;
}

FrameSequence progression_frames(std::span<const ChordToken> chords,
                                 std::size_t frames_per_chord, std::size_t total_frames,
                                 double frame_rate_hz) {
  if (chords.empty() || frames_per_chord == 0) {
    throw ValidationError("progression_frames: need chords and a positive segment length");
  }
  FrameSequence seq;
  seq.frame_rate_hz = frame_rate_hz;
  seq.tokens.resize(total_frames);
  for (std::size_t t = 0; t < total_frames; ++t) {
    seq.tokens[t] = chords[(t / frames_per_chord) % chords.size()].id();
  }
  return seq;
}

std::string format_frame_sequence(const FrameSequence& seq) {
  std::ostringstream os;
  os.precision(17);
  os << "frame_rate=" << seq.frame_rate_hz << '\n';
  for (int t : seq.tokens) os << t << '\n';
  return os.str();
}

FrameSequence parse_frame_sequence(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("frame_rate=", 0) != 0) {
    throw ParseError("frame sequence: missing 'frame_rate=<hz>' header");
  }
  FrameSequence seq;
  try {
    seq.frame_rate_hz = std::stod(header.substr(11));
  } catch (const std::exception&) {
    throw ParseError("frame sequence: bad header '" + header + "'");
  }
  if (!(seq.frame_rate_hz > 0.0)) {
    throw ParseError("frame sequence: frame rate must be positive");
  }
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    int token = -1;
    try {
      std::size_t used = 0;
      token = std::stoi(line, &used);
      if (line.find_first_not_of(" \t\r", used) != std::string::npos) {
        throw std::invalid_argument("");
      }
    } catch (const std::exception&) {
      throw ParseError("frame sequence line " + std::to_string(line_no) + ": '" + line +
                       "' is not an integer");
    }
    if (token < 0 || token > kNoChordToken) {
      throw ParseError("frame sequence line " + std::to_string(line_no) + ": token " +
                       std::to_string(token) + " outside 0-48");
    }
    seq.tokens.push_back(token);
  }
  return seq;
}

void write_frame_sequence(const std::filesystem::path& path, const FrameSequence& seq) {
  write_file_atomic(path, format_frame_sequence(seq));
}

FrameSequence read_frame_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_frame_sequence(in);
}

}  // namespace csg
