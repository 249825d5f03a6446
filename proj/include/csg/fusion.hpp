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

// Chord / lyric-audio fusion.
//
// The dual-path fusion runs the chord embeddings through non-causal
// self-attention blocks and the lyric-audio embeddings through causal
// blocks (A). Audio queries attend over chord keys/values to give the
// aligned chord sequence
//
//   C = softmax(Q_audio K_chord^T / sqrt(d_k)) V_chord,
//
// a single linear map M scores each frame,
//
//   W = sigmoid(M([C; A])),   clamped to [1e-6, 1 - 1e-6],
//
// and the fused sequence is
//
//   F = sqrt(W) o C + sqrt(1 - W) o A,
//
// with one scalar weight per frame shared by all channels. The concat and
// plain cross-attention baselines, and a chord-free mode, share the same
// audio path.
//
// Every sequence tensor stacks `batch` equal-length sequences along rows.

#ifndef CSG_FUSION_HPP_
#define CSG_FUSION_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "csg/parameters.hpp"
#include "csg/tensor.hpp"

namespace csg {

enum class FusionMode { kDws, kConcat, kXattn, kNone };

std::string_view fusion_mode_name(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);
bool uses_chord_path(FusionMode mode);

struct FusionConfig {
  std::size_t dim = 64;
  std::size_t chord_path_layers = 2;
  std::size_t audio_path_layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  double dropout = 0.1;
  FusionMode mode = FusionMode::kDws;

  void validate() const;
};

enum class SequenceRole { kChord, kLyricAudio, kAlignment, kFusion };

template <typename T>
struct EmbeddingSequence {
  Tensor<T> values;  // [batch * frames x dim]
  SequenceRole role = SequenceRole::kChord;
  std::size_t batch = 1;

  std::size_t frames() const { return values.dim(0) / batch; }
  std::size_t dim() const { return values.dim(1); }
};

template <typename T>
struct WeightSequence {
  Tensor<T> values;  // [batch * frames x 1], each in [1e-6, 1 - 1e-6]
  std::size_t batch = 1;
};

inline constexpr double kWeightClamp = 1e-6;

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

// Pre-norm block: x + Attn(LN(x)), then + FFN(LN(.)).
template <typename T>
struct TransformerBlockParams {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> wq, wk, wv, wo;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct AlignParams {
  Tensor<T> wq, wk, wv;  // [dim x dim], no bias
};

template <typename T>
struct DynamicWeightParams {
  Tensor<T> m;     // [2 dim x 1]
  Tensor<T> bias;  // [1]
};

template <typename T>
struct ConcatParams {
  Tensor<T> w;  // [2 dim x dim]
  Tensor<T> b;  // [dim]
};

template <typename T>
struct FusionParams {
  std::vector<TransformerBlockParams<T>> chord_blocks;
  std::vector<TransformerBlockParams<T>> audio_blocks;
  AlignParams<T> align;
  DynamicWeightParams<T> weights;
  ConcatParams<T> concat;
};

// Registers a block under `prefix` (e.g. "gpt.0.").
template <typename T>
TransformerBlockParams<T> make_block_params(ParameterStore<T>& store,
                                            const std::string& prefix, std::size_t dim,
                                            std::size_t ffn_mult, Rng& rng);

// Registers only the parameters the configured mode uses.
template <typename T>
FusionParams<T> make_fusion_params(ParameterStore<T>& store, const FusionConfig& config,
                                   Rng& rng, const std::string& prefix = "fusion.");

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, std::size_t batch,
                            const TransformerBlockParams<T>& p, std::size_t heads,
                            bool causal, double dropout, const ForwardContext& ctx);

template <typename T>
EmbeddingSequence<T> encode_chord_path(const EmbeddingSequence<T>& chord_emb,
                                       const FusionParams<T>& params,
                                       const FusionConfig& config,
                                       const ForwardContext& ctx);

template <typename T>
EmbeddingSequence<T> encode_audio_path(const EmbeddingSequence<T>& lyric_audio_emb,
                                       const FusionParams<T>& params,
                                       const FusionConfig& config,
                                       const ForwardContext& ctx);

// Frame counts of the two inputs may differ; output follows the audio.
template <typename T>
EmbeddingSequence<T> align(const EmbeddingSequence<T>& chord_enc,
                           const EmbeddingSequence<T>& audio_enc,
                           const AlignParams<T>& params, std::size_t heads);

template <typename T>
WeightSequence<T> dynamic_weights(const EmbeddingSequence<T>& aligned,
                                  const EmbeddingSequence<T>& audio,
                                  const DynamicWeightParams<T>& params);

template <typename T>
EmbeddingSequence<T> fuse(const EmbeddingSequence<T>& aligned,
                          const EmbeddingSequence<T>& audio,
                          const WeightSequence<T>& weights);

// Frame-local: Linear([chord_t; a_t]). Pass the encoded audio sequence.
template <typename T>
EmbeddingSequence<T> fuse_baseline_concat(const EmbeddingSequence<T>& chord_emb,
                                          const EmbeddingSequence<T>& audio,
                                          const ConcatParams<T>& params);

// align(...) + A, no weighting.
template <typename T>
EmbeddingSequence<T> fuse_baseline_xattn(const EmbeddingSequence<T>& chord_enc,
                                         const EmbeddingSequence<T>& audio,
                                         const AlignParams<T>& params, std::size_t heads);

// Intermediate sequences of one fusion pass, for probes and diagnostics.
template <typename T>
struct FusionTrace {
  EmbeddingSequence<T> chord_encoded;
  EmbeddingSequence<T> audio_encoded;
  EmbeddingSequence<T> aligned;
  WeightSequence<T> weights;
};

// Full fusion for the configured mode. The chord sequence may be longer
// than the audio sequence (whole-song chords against an audio prefix) in
// dws/xattn modes; concat needs equal lengths; none ignores chords.
template <typename T>
EmbeddingSequence<T> fusion_forward(const EmbeddingSequence<T>& chord_emb,
                                    const EmbeddingSequence<T>& lyric_audio_emb,
                                    const FusionParams<T>& params,
                                    const FusionConfig& config, const ForwardContext& ctx,
                                    FusionTrace<T>* trace = nullptr);

// Runs the chord path once so repeated fusion calls (autoregressive
// decoding) can reuse it.
template <typename T>
EmbeddingSequence<T> fusion_forward_encoded(const EmbeddingSequence<T>& chord_emb,
                                            const EmbeddingSequence<T>& chord_enc,
                                            const EmbeddingSequence<T>& lyric_audio_emb,
                                            const FusionParams<T>& params,
                                            const FusionConfig& config,
                                            const ForwardContext& ctx,
                                            FusionTrace<T>* trace = nullptr);

}  // namespace csg

#endif  // CSG_FUSION_HPP_
