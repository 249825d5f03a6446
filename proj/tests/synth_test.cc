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
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "csg/chord.hpp"
#include "csg/error.hpp"
#include "csg/synth.hpp"

namespace csg {
namespace {

std::vector<int> repeat_chords(std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i % 49);
  return out;
}

double differing_fraction(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
  return static_cast<double>(diff) / static_cast<double>(a.size());
}

TEST(CorruptChords, RateZeroIsClean) {
  Rng rng(1);
  auto clean = repeat_chords(1000);
  EXPECT_EQ(corrupt_chords(clean, 0.0, rng), clean);
}

TEST(CorruptChords, RateOneChangesEveryFrame) {
  Rng rng(2);
  auto clean = repeat_chords(1000);
  auto noisy = corrupt_chords(clean, 1.0, rng);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_NE(noisy[i], clean[i]);
    EXPECT_GE(noisy[i], 0);
    EXPECT_LT(noisy[i], kNumChordTokens);
  }
}

TEST(CorruptChords, RateIsRespected) {
  Rng rng(3);
  auto clean = repeat_chords(10000);
  EXPECT_NEAR(differing_fraction(corrupt_chords(clean, 0.33, rng), clean), 0.33, 0.02);
}

TEST(CorruptChords, ReplacementsCoverOtherChordsUniformly) {
  Rng rng(4);
  std::vector<int> clean(47000, 5);
  std::vector<int> hist(kNumChordTokens, 0);
  for (int t : corrupt_chords(clean, 1.0, rng)) ++hist[t];
  EXPECT_EQ(hist[5], 0);
  for (int c = 0; c < kNumChordTokens; ++c) {
    if (c == 5) continue;
    EXPECT_NEAR(hist[c], 1000, 150) << c;
  }
}

TEST(EmissionRule, StyleFollowsLyricChanges) {
  EmissionRule rule;
  EXPECT_EQ(rule.next_style(0, 3, 0, true), 1);
  EXPECT_EQ(rule.next_style(0, 4, 0, true), 0);
  EXPECT_EQ(rule.next_style(1, 4, 4, false), 1);
  EXPECT_EQ(rule.next_style(1, 5, 4, false), 0);
}

TEST(EmissionRule, TokensDecodeBack) {
  EmissionRule rule;
  for (int chord = 0; chord < kNumChordTokens; ++chord) {
    for (int style = 0; style < 2; ++style) {
      const auto c = ChordToken::from_id(chord);
      EXPECT_EQ(rule.decode_root(rule.song_token(chord, style, 4), 4), c.root);
      EXPECT_EQ(rule.decode_quality(rule.song_token(chord, style, 7), 7),
                static_cast<int>(c.quality));
      EXPECT_EQ(rule.decode_root(rule.song_token(chord, style, 7), 6), -1);
    }
  }
  for (std::size_t frame : {0u, 1u}) {
    const int tok = rule.song_token(kNoChordToken, 0, frame);
    EXPECT_EQ(rule.decode_root(tok, frame), -1);
    EXPECT_EQ(rule.decode_quality(tok, frame), -1);
  }
  EXPECT_EQ(rule.vocal_token(20, 1), 4);
}

TEST(EmissionRule, SmallVocabulariesAreRejected) {
  EmissionRule rule{16, 32};
  EXPECT_THROW(rule.validate(), ValidationError);
}

TEST(Generate, StreamsFollowTheRule) {
  SynthSpec spec;
  spec.frames = 300;
  const auto rule = spec.emission();
  for (std::size_t i = 0; i < 5; ++i) {
    auto ex = generate_example(spec, "train", i);
    ASSERT_EQ(ex.frames(), 300u);
    ASSERT_EQ(ex.lyric.size(), 300u);
    std::set<int> distinct(ex.chord_clean.begin(), ex.chord_clean.end());
    EXPECT_LE(distinct.size(), 4u);
    int style = 0;
    for (std::size_t t = 0; t < ex.frames(); ++t) {
      style = rule.next_style(style, ex.lyric[t], t ? ex.lyric[t - 1] : 0, t == 0);
      ASSERT_EQ(ex.song[t], rule.song_token(ex.chord_clean[t], style, t));
      ASSERT_EQ(ex.vocal[t], rule.vocal_token(ex.lyric[t], style));
      ASSERT_LT(ex.lyric[t], 32);
    }
  }
}

TEST(Generate, SegmentLengthsStayInRange) {
  SynthSpec spec;
  spec.frames = 1000;
  auto ex = generate_example(spec, "train", 0);
  std::size_t run = 1;
  for (std::size_t t = 1; t < ex.frames(); ++t) {
    if (ex.chord_clean[t] == ex.chord_clean[t - 1]) {
      ++run;
      continue;
    }
    // Neighbouring segments can repeat a chord, so only the lower bound holds.
    EXPECT_GE(run, spec.min_segment);
    run = 1;
  }
}

TEST(Generate, DeterministicAndSplitDependent) {
  SynthSpec spec;
  spec.n_examples = 4;
  spec.eval_examples = 2;
  spec.frames = 64;
  spec.noise_rate = 0.2;
  auto a = generate_dataset(spec), b = generate_dataset(spec);
  ASSERT_EQ(a.train.examples.size(), 4u);
  ASSERT_EQ(a.eval.examples.size(), 2u);
  EXPECT_EQ(format_dataset(a.train), format_dataset(b.train));
  EXPECT_EQ(format_dataset(a.eval), format_dataset(b.eval));
  EXPECT_NE(a.train.examples[0].lyric, a.eval.examples[0].lyric);
  spec.seed = 2;
  EXPECT_NE(format_dataset(generate_dataset(spec).train), format_dataset(a.train));
}

TEST(Generate, TrainingViewUsesNoisyChords) {
  SynthSpec spec;
  spec.frames = 64;
  spec.noise_rate = 0.5;
  auto ex = generate_example(spec, "train", 0);
  auto view = ex.training_example();
  EXPECT_EQ(view.chord, ex.chord_noisy);
  EXPECT_NE(view.chord, ex.chord_clean);
  EXPECT_EQ(view.song, ex.song);
}

TEST(SynthSpec, ValidationAndConfigRoundTrip) {
  SynthSpec spec;
  spec.noise_rate = 0.33;
  spec.frames = 128;
  KeyValueConfig kv;
  spec.write_to(kv);
  auto back = SynthSpec::from(kv);
  EXPECT_EQ(back.frames, 128u);
  EXPECT_DOUBLE_EQ(back.noise_rate, 0.33);
  spec.noise_rate = 1.5;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec.noise_rate = 0.0;
  spec.min_segment = 0;
  EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(DatasetIo, RoundTripsThroughText) {
  SynthSpec spec;
  spec.n_examples = 3;
  spec.eval_examples = 1;
  spec.frames = 40;
  spec.noise_rate = 0.25;
  auto ds = generate_dataset(spec);
  std::istringstream in(format_dataset(ds.train));
  auto back = parse_dataset(in);
  EXPECT_EQ(back.split, "train");
  ASSERT_EQ(back.examples.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.examples[i].chord_clean, ds.train.examples[i].chord_clean);
    EXPECT_EQ(back.examples[i].chord_noisy, ds.train.examples[i].chord_noisy);
    EXPECT_EQ(back.examples[i].song, ds.train.examples[i].song);
  }
  EXPECT_EQ(format_dataset(back), format_dataset(ds.train));

  const auto path = std::filesystem::temp_directory_path() / "csg_synth_test.dataset";
  write_dataset(path, ds.eval);
  EXPECT_EQ(format_dataset(read_dataset(path)), format_dataset(ds.eval));
  std::filesystem::remove(path);
  EXPECT_THROW(read_dataset(path), IoError);
}

TEST(DatasetIo, RejectsCorruptInput) {
  std::istringstream wrong_header("not-a-dataset\n");
  EXPECT_THROW(parse_dataset(wrong_header), ParseError);
  SynthSpec spec;
  spec.n_examples = 1;
  spec.frames = 8;
  auto text = format_dataset(generate_dataset(spec).train);
  std::istringstream truncated(text.substr(0, text.size() - 10));
  EXPECT_THROW(parse_dataset(truncated), Error);
}

}  // namespace
}  // namespace csg
