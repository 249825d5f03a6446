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

#ifndef CSG_MODEL_HPP_
#define CSG_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csg/fusion.hpp"
#include "csg/io.hpp"
#include "csg/parameters.hpp"
#include "csg/tensor.hpp"

namespace csg {

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t chord_path_layers = 2;
  std::size_t audio_path_layers = 2;
  std::size_t gpt_layers = 2;
  std::size_t ffn_mult = 4;
  double dropout = 0.1;
  std::size_t chord_vocab = 49;
  std::size_t lyric_vocab = 32;
  std::size_t vocal_vocab = 32;
  std::size_t song_vocab = 32;
  std::size_t max_frames = 256;
  FusionMode mode = FusionMode::kDws;

  void validate() const;
  FusionConfig fusion() const;

  // Keys match the field names plus `mode`.
  void write_to(KeyValueConfig& kv) const;
  static ModelConfig from(const KeyValueConfig& kv);
  bool operator==(const ModelConfig&) const = default;
};

// One training example: four frame-aligned token streams.
struct SongExample {
  std::vector<int> chord;
  std::vector<int> lyric;
  std::vector<int> vocal;
  std::vector<int> song;
  // Feed begin-of-sequence in place of every previous-frame song token.
  bool hide_song_history = false;

  std::size_t frames() const { return chord.size(); }
};

template <typename T>
struct CombinedInputs {
  EmbeddingSequence<T> chord;        // chord table + positions
  EmbeddingSequence<T> lyric_audio;  // lyric[t] + vocal[t-1] + song[t-1] + positions
};

template <typename T>
struct ForwardOutput {
  Tensor<T> vocal_logits;  // [batch * frames x vocal_vocab]
  Tensor<T> song_logits;   // [batch * frames x song_vocab]
  Tensor<T> loss;          // CE(vocal) + CE(song)
};

struct Sampler {
  enum class Kind { kGreedy, kTopK, kTemperature };
  Kind kind = Kind::kGreedy;
  std::size_t k = 1;
  double temperature = 1.0;

  // "greedy", "topk:<k>", "temp:<tau>"
  static Sampler parse(std::string_view text);
  std::string to_string() const;
};

// Picks a token from one row of logits. Greedy breaks ties toward the
// lowest id.
int sample_token(std::span<const double> logits, const Sampler& sampler, Rng& rng);

struct Generation {
  std::vector<int> vocal;
  std::vector<int> song;
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  // Parameters are shared handles, so copies would alias; use clone().
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  // Deep copy of configuration and parameter values.
  Model clone() const;

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

  // All examples in a batch must share one frame count.
  CombinedInputs<T> combine_inputs(std::span<const SongExample> batch) const;

  ForwardOutput<T> forward_teacher_forced(std::span<const SongExample> batch,
                                          const ForwardContext& ctx) const;

  // Frame-by-frame decoding; each frame sees every chord frame, lyric
  // frames up to itself and the tokens generated before it.
  std::vector<Generation> generate(std::span<const std::vector<int>> chords,
                                   std::span<const std::vector<int>> lyrics,
                                   const Sampler& sampler, std::uint64_t seed) const;
  Generation generate(const std::vector<int>& chords, const std::vector<int>& lyrics,
                      const Sampler& sampler, std::uint64_t seed) const;

  const FusionParams<T>& fusion_params() const { return fusion_; }

 private:
  // vocal and song tables carry one extra trailing row used as the
  // begin-of-sequence embedding at frame 0.
  struct Tables {
    Tensor<T> chord, lyric, vocal, song, position;
  };

  // Embeds chord ids [batch x frames] and the lyric-audio stream given the
  // previous-frame vocal/song ids (-1 marks begin-of-sequence).
  EmbeddingSequence<T> embed_chords(std::span<const int> ids, std::size_t batch) const;
  EmbeddingSequence<T> embed_lyric_audio(std::span<const int> lyric,
                                         std::span<const int> prev_vocal,
                                         std::span<const int> prev_song,
                                         std::size_t batch) const;
  Tensor<T> decoder_trunk(const EmbeddingSequence<T>& fused, const ForwardContext& ctx) const;
  void check_frames(std::size_t frames) const;

  ModelConfig config_;
  ParameterStore<T> store_;
  Tables tables_;
  FusionParams<T> fusion_;
  std::vector<TransformerBlockParams<T>> gpt_blocks_;
  Tensor<T> final_ln_gain_, final_ln_bias_;
  Tensor<T> vocal_head_, song_head_;
};

// Binary container: magic, format version, scalar width, the model config
// as key=value text, then named parameter arrays.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace csg

#endif  // CSG_MODEL_HPP_
