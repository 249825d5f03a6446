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

#include "csg/synth.hpp"

#include <fstream>
#include <sstream>

#include "csg/chord.hpp"
#include "csg/error.hpp"

namespace csg {

namespace {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform integer in [lo, hi] without modulo bias.
std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return lo + static_cast<std::size_t>(r % span);
}

std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---- emission rule ---------------------------------------------------------

void EmissionRule::validate() const {
  if (song_vocab < 32) {
    throw ValidationError("emission rule needs song_vocab >= 32, got " +
                          std::to_string(song_vocab));
  }
  if (vocal_vocab < 2) throw ValidationError("emission rule needs vocal_vocab >= 2");
}

int EmissionRule::next_style(int prev_style, int lyric, int prev_lyric, bool first) const {
  if (first) return lyric & 1;
  return prev_style ^ (lyric != prev_lyric ? 1 : 0);
}

int EmissionRule::song_token(int chord, int style, std::size_t frame) const {
  const bool even = frame % 2 == 0;
  if (chord == kNoChordToken) {
    return even ? kRootTokens + 4 * style : 12 * style;
  }
  const auto c = ChordToken::from_id(chord);
  if (even) return c.root + 12 * style;
  return kRootTokens + static_cast<int>(c.quality) + 4 * style;
}

int EmissionRule::vocal_token(int lyric, int style) const {
  return (lyric + kStyleStride * style) % static_cast<int>(vocal_vocab);
}

int EmissionRule::decode_root(int token, std::size_t frame) const {
  if (frame % 2 != 0 || token < 0 || token >= kRootTokens) return -1;
  return token % 12;
}

int EmissionRule::decode_quality(int token, std::size_t frame) const {
  if (frame % 2 != 1 || token < kRootTokens || token >= kRootTokens + 8) return -1;
  return (token - kRootTokens) % 4;
}

// ---- spec ------------------------------------------------------------------

void SynthSpec::validate() const {
  if (frames == 0) throw ValidationError("synth: frames must be positive");
  if (min_segment == 0 || min_segment > max_segment) {
    throw ValidationError("synth: bad chord segment range");
  }
  if (min_lyric_segment == 0 || min_lyric_segment > max_lyric_segment) {
    throw ValidationError("synth: bad lyric segment range");
  }
  if (lyric_vocab < 2) throw ValidationError("synth: lyric_vocab must be at least 2");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
    throw ValidationError("synth: noise_rate must lie in [0, 1]");
  }
  emission().validate();
}

void SynthSpec::write_to(KeyValueConfig& kv) const {
  kv.set("synth.n_examples", std::to_string(n_examples));
  kv.set("synth.eval_examples", std::to_string(eval_examples));
  kv.set("synth.frames", std::to_string(frames));
  kv.set("synth.min_segment", std::to_string(min_segment));
  kv.set("synth.max_segment", std::to_string(max_segment));
  kv.set("synth.min_lyric_segment", std::to_string(min_lyric_segment));
  kv.set("synth.max_lyric_segment", std::to_string(max_lyric_segment));
  kv.set("synth.lyric_vocab", std::to_string(lyric_vocab));
  kv.set("synth.vocal_vocab", std::to_string(vocal_vocab));
  kv.set("synth.song_vocab", std::to_string(song_vocab));
  std::ostringstream os;
  os.precision(17);
  os << noise_rate;
  kv.set("synth.noise_rate", os.str());
  kv.set("synth.seed", std::to_string(seed));
}

SynthSpec SynthSpec::from(const KeyValueConfig& kv) {
  SynthSpec s;
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ValidationError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  s.n_examples = size("synth.n_examples", s.n_examples);
  s.eval_examples = size("synth.eval_examples", s.eval_examples);
  s.frames = size("synth.frames", s.frames);
  s.min_segment = size("synth.min_segment", s.min_segment);
  s.max_segment = size("synth.max_segment", s.max_segment);
  s.min_lyric_segment = size("synth.min_lyric_segment", s.min_lyric_segment);
  s.max_lyric_segment = size("synth.max_lyric_segment", s.max_lyric_segment);
  s.lyric_vocab = size("synth.lyric_vocab", s.lyric_vocab);
  s.vocal_vocab = size("synth.vocal_vocab", s.vocal_vocab);
  s.song_vocab = size("synth.song_vocab", s.song_vocab);
  s.noise_rate = kv.get_double("synth.noise_rate", s.noise_rate);
  s.seed = static_cast<std::uint64_t>(kv.get_int("synth.seed", static_cast<long long>(s.seed)));
  s.validate();
  return s;
}

// ---- generation ------------------------------------------------------------

SongExample SynthExample::training_example() const {
  return SongExample{chord_noisy, lyric, vocal, song};
}

std::vector<int> corrupt_chords(const std::vector<int>& clean, double noise_rate, Rng& rng) {
  std::vector<int> out = clean;
  for (auto& t : out) {
    if (uniform01(rng) >= noise_rate) continue;
    // 47 candidates: every chord but the true one.
    const int r = static_cast<int>(uniform_int(rng, 0, kNumChordTokens - 2));
    t = (t < kNumChordTokens && r >= t) ? r + 1 : r;
  }
  return out;
}

SynthExample generate_example(const SynthSpec& spec, const std::string& split,
                              std::size_t index) {
  Rng rng(mix_seed(mix_seed(spec.seed, hash_string(split)), index));
  const auto rule = spec.emission();
  SynthExample ex;

  const int key = static_cast<int>(uniform_int(rng, 0, kNumRoots - 1));
  const Mode mode = uniform_int(rng, 0, 1) == 0 ? Mode::kMajor : Mode::kMinor;
  std::string digits;
  for (int i = 0; i < 4; ++i) digits += static_cast<char>('1' + uniform_int(rng, 0, 6));
  const auto progression = parse_progression(key, mode, digits);
  ex.chord_clean.reserve(spec.frames);
  for (std::size_t i = 0; ex.chord_clean.size() < spec.frames; ++i) {
    const auto len = uniform_int(rng, spec.min_segment, spec.max_segment);
    const int token = progression[i % progression.size()].id();
    for (std::size_t k = 0; k < len && ex.chord_clean.size() < spec.frames; ++k) {
      ex.chord_clean.push_back(token);
    }
  }

  ex.lyric.reserve(spec.frames);
  while (ex.lyric.size() < spec.frames) {
    const auto len = uniform_int(rng, spec.min_lyric_segment, spec.max_lyric_segment);
    const int token = static_cast<int>(uniform_int(rng, 0, spec.lyric_vocab - 1));
    for (std::size_t k = 0; k < len && ex.lyric.size() < spec.frames; ++k) {
      ex.lyric.push_back(token);
    }
  }

  ex.vocal.resize(spec.frames);
  ex.song.resize(spec.frames);
  int style = 0;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    style = rule.next_style(style, ex.lyric[t], t ? ex.lyric[t - 1] : 0, t == 0);
    ex.song[t] = rule.song_token(ex.chord_clean[t], style, t);
    ex.vocal[t] = rule.vocal_token(ex.lyric[t], style);
  }

  ex.chord_noisy = corrupt_chords(ex.chord_clean, spec.noise_rate, rng);
  return ex;
}

DatasetSplits generate_dataset(const SynthSpec& spec) {
  spec.validate();
  DatasetSplits out;
  out.train.spec = spec;
  out.train.split = "train";
  out.eval.spec = spec;
  out.eval.split = "eval";
  for (std::size_t i = 0; i < spec.n_examples; ++i) {
    out.train.examples.push_back(generate_example(spec, "train", i));
  }
  for (std::size_t i = 0; i < spec.eval_examples; ++i) {
    out.eval.examples.push_back(generate_example(spec, "eval", i));
  }
  return out;
}

// ---- files -----------------------------------------------------------------

std::string format_dataset(const Dataset& dataset) {
  std::ostringstream os;
  os << "csg-dataset 1\n";
  os << "split=" << dataset.split << '\n';
  KeyValueConfig kv;
  dataset.spec.write_to(kv);
  os << kv.format();
  os << "examples=" << dataset.examples.size() << '\n';
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& ex = dataset.examples[i];
    os << "example " << i << '\n';
    os << "chord_clean " << join_ints(ex.chord_clean) << '\n';
    os << "chord_noisy " << join_ints(ex.chord_noisy) << '\n';
    os << "lyric " << join_ints(ex.lyric) << '\n';
    os << "vocal " << join_ints(ex.vocal) << '\n';
    os << "song " << join_ints(ex.song) << '\n';
  }
  return os.str();
}

Dataset parse_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "csg-dataset 1") {
    throw ParseError("dataset: missing 'csg-dataset 1' header");
  }
  Dataset ds;
  KeyValueConfig kv;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.rfind("examples=", 0) == 0) {
      expected = static_cast<std::size_t>(std::stoull(line.substr(9)));
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("dataset: bad header line '" + line + "'");
    if (line.rfind("split=", 0) == 0) {
      ds.split = line.substr(6);
    } else {
      kv.set(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  ds.spec = SynthSpec::from(kv);
  auto read_stream = [&](const char* name) {
    if (!std::getline(in, line)) throw ParseError("dataset: truncated example");
    const std::string prefix = std::string(name) + " ";
    if (line.rfind(prefix, 0) != 0 && line != name) {
      throw ParseError("dataset: expected '" + std::string(name) + "', got '" +
                       line.substr(0, 40) + "'");
    }
    return line.size() > prefix.size() ? parse_int_list(line.substr(prefix.size()))
                                       : std::vector<int>{};
  };
  for (std::size_t i = 0; i < expected; ++i) {
    if (!std::getline(in, line) || line != "example " + std::to_string(i)) {
      throw ParseError("dataset: expected 'example " + std::to_string(i) + "'");
    }
    SynthExample ex;
    ex.chord_clean = read_stream("chord_clean");
    ex.chord_noisy = read_stream("chord_noisy");
    ex.lyric = read_stream("lyric");
    ex.vocal = read_stream("vocal");
    ex.song = read_stream("song");
    const auto n = ex.chord_clean.size();
    if (ex.chord_noisy.size() != n || ex.lyric.size() != n || ex.vocal.size() != n ||
        ex.song.size() != n) {
      throw ParseError("dataset: example " + std::to_string(i) + " has ragged streams");
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file_atomic(path, format_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_dataset(in);
}

}  // namespace csg
