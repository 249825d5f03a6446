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

#include "csg/fusion.hpp"

#include <cmath>

#include "csg/error.hpp"

namespace csg {

std::string_view fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::kDws: return "dws";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kXattn: return "xattn";
    case FusionMode::kNone: return "none";
  }
  return "dws";
}

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "dws") return FusionMode::kDws;
  if (name == "concat") return FusionMode::kConcat;
  if (name == "xattn") return FusionMode::kXattn;
  if (name == "none") return FusionMode::kNone;
  throw ParseError("unknown fusion mode '" + std::string(name) +
                   "' (expected dws, concat, xattn or none)");
}

bool uses_chord_path(FusionMode mode) {
  return mode == FusionMode::kDws || mode == FusionMode::kXattn;
}

void FusionConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ValidationError("fusion: dim " + std::to_string(dim) +
                          " must be a positive multiple of heads " +
                          std::to_string(heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ValidationError("fusion: dropout must lie in [0, 1)");
  }
  if (ffn_mult == 0) throw ValidationError("fusion: ffn_mult must be positive");
}

namespace {

template <typename T>
void require_dim(const EmbeddingSequence<T>& seq, std::size_t dim, const char* what) {
  if (seq.values.rank() != 2 || seq.dim() != dim) {
    throw ShapeError(std::string(what) + ": expected width " + std::to_string(dim) +
                     ", got " + shape_string(seq.values.shape()));
  }
}

template <typename T>
void require_same_frames(const EmbeddingSequence<T>& a, const EmbeddingSequence<T>& b,
                         const char* what) {
  if (a.batch != b.batch || a.values.dim(0) != b.values.dim(0)) {
    throw ShapeError(std::string(what) + ": frame counts differ (" +
                     shape_string(a.values.shape()) + " vs " +
                     shape_string(b.values.shape()) + ")");
  }
}

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, double p, const ForwardContext& ctx) {
  if (!ctx.training || p == 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("dropout in training needs an rng");
  return dropout(x, p, *ctx.rng, true);
}

template <typename T>
EmbeddingSequence<T> run_path(const EmbeddingSequence<T>& input,
                              const std::vector<TransformerBlockParams<T>>& blocks,
                              const FusionConfig& config, bool causal,
                              const ForwardContext& ctx, SequenceRole role) {
  require_dim(input, config.dim, causal ? "encode_audio_path" : "encode_chord_path");
  Tensor<T> x = input.values;
  for (const auto& block : blocks) {
    x = transformer_block(x, input.batch, block, config.heads, causal, config.dropout, ctx);
  }
  return EmbeddingSequence<T>{x, role, input.batch};
}

}  // namespace

template <typename T>
TransformerBlockParams<T> make_block_params(ParameterStore<T>& store,
                                            const std::string& prefix, std::size_t dim,
                                            std::size_t ffn_mult, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  const std::size_t hidden = dim * ffn_mult;
  TransformerBlockParams<T> p;
  p.ln1_gain = store.add_constant(prefix + "ln1.gain", {dim}, T(1));
  p.ln1_bias = store.add_constant(prefix + "ln1.bias", {dim}, T(0));
  p.wq = store.add_normal(prefix + "attn.wq", {dim, dim}, s, rng);
  p.wk = store.add_normal(prefix + "attn.wk", {dim, dim}, s, rng);
  p.wv = store.add_normal(prefix + "attn.wv", {dim, dim}, s, rng);
  p.wo = store.add_normal(prefix + "attn.wo", {dim, dim}, s, rng);
  p.ln2_gain = store.add_constant(prefix + "ln2.gain", {dim}, T(1));
  p.ln2_bias = store.add_constant(prefix + "ln2.bias", {dim}, T(0));
  p.w1 = store.add_normal(prefix + "ffn.w1", {dim, hidden}, s, rng);
  p.b1 = store.add_constant(prefix + "ffn.b1", {hidden}, T(0));
  p.w2 = store.add_normal(prefix + "ffn.w2", {hidden, dim},
                          1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  p.b2 = store.add_constant(prefix + "ffn.b2", {dim}, T(0));
  return p;
}

template <typename T>
FusionParams<T> make_fusion_params(ParameterStore<T>& store, const FusionConfig& config,
                                   Rng& rng, const std::string& prefix) {
  config.validate();
  const std::size_t d = config.dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  FusionParams<T> p;
  if (uses_chord_path(config.mode)) {
    for (std::size_t i = 0; i < config.chord_path_layers; ++i) {
      p.chord_blocks.push_back(make_block_params<T>(
          store, prefix + "chord." + std::to_string(i) + ".", d, config.ffn_mult, rng));
    }
  }
  for (std::size_t i = 0; i < config.audio_path_layers; ++i) {
    p.audio_blocks.push_back(make_block_params<T>(
        store, prefix + "audio." + std::to_string(i) + ".", d, config.ffn_mult, rng));
  }
  if (uses_chord_path(config.mode)) {
    p.align.wq = store.add_normal(prefix + "align.wq", {d, d}, s, rng);
    p.align.wk = store.add_normal(prefix + "align.wk", {d, d}, s, rng);
    p.align.wv = store.add_normal(prefix + "align.wv", {d, d}, s, rng);
  }
  if (config.mode == FusionMode::kDws) {
    p.weights.m = store.add_normal(prefix + "weights.m", {2 * d, 1},
                                   1.0 / std::sqrt(2.0 * static_cast<double>(d)), rng);
    p.weights.bias = store.add_constant(prefix + "weights.bias", {1}, T(0));
  }
  if (config.mode == FusionMode::kConcat) {
    p.concat.w = store.add_normal(prefix + "concat.w", {2 * d, d},
                                  1.0 / std::sqrt(2.0 * static_cast<double>(d)), rng);
    p.concat.b = store.add_constant(prefix + "concat.b", {d}, T(0));
  }
  return p;
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, std::size_t batch,
                            const TransformerBlockParams<T>& p, std::size_t heads,
                            bool causal, double dropout_p, const ForwardContext& ctx) {
  auto h = layernorm(x, p.ln1_gain, p.ln1_bias);
  auto att = attention(matmul(h, p.wq), matmul(h, p.wk), matmul(h, p.wv),
                       AttentionSpec{batch, heads, causal});
  auto y = x + maybe_dropout(matmul(att, p.wo), dropout_p, ctx);
  auto h2 = layernorm(y, p.ln2_gain, p.ln2_bias);
  auto ff = add_bias(matmul(gelu(add_bias(matmul(h2, p.w1), p.b1)), p.w2), p.b2);
  return y + maybe_dropout(ff, dropout_p, ctx);
}

template <typename T>
EmbeddingSequence<T> encode_chord_path(const EmbeddingSequence<T>& chord_emb,
                                       const FusionParams<T>& params,
                                       const FusionConfig& config,
                                       const ForwardContext& ctx) {
  return run_path(chord_emb, params.chord_blocks, config, false, ctx, SequenceRole::kChord);
}

template <typename T>
EmbeddingSequence<T> encode_audio_path(const EmbeddingSequence<T>& lyric_audio_emb,
                                       const FusionParams<T>& params,
                                       const FusionConfig& config,
                                       const ForwardContext& ctx) {
  return run_path(lyric_audio_emb, params.audio_blocks, config, true, ctx,
                  SequenceRole::kLyricAudio);
}

template <typename T>
EmbeddingSequence<T> align(const EmbeddingSequence<T>& chord_enc,
                           const EmbeddingSequence<T>& audio_enc,
                           const AlignParams<T>& params, std::size_t heads) {
  const std::size_t d = params.wq.dim(0);
  require_dim(chord_enc, d, "align");
  require_dim(audio_enc, d, "align");
  if (chord_enc.batch != audio_enc.batch) {
    throw ShapeError("align: batch sizes differ");
  }
  auto q = matmul(audio_enc.values, params.wq);
  auto k = matmul(chord_enc.values, params.wk);
  auto v = matmul(chord_enc.values, params.wv);
  return EmbeddingSequence<T>{attention(q, k, v, AttentionSpec{audio_enc.batch, heads, false}),
                              SequenceRole::kAlignment, audio_enc.batch};
}

template <typename T>
WeightSequence<T> dynamic_weights(const EmbeddingSequence<T>& aligned,
                                  const EmbeddingSequence<T>& audio,
                                  const DynamicWeightParams<T>& params) {
  require_same_frames(aligned, audio, "dynamic_weights");
  auto logits = add_bias(matmul(concat_last(aligned.values, audio.values), params.m),
                         params.bias);
  const T lo = static_cast<T>(kWeightClamp);
  return WeightSequence<T>{clamp(sigmoid(logits), lo, T(1) - lo), audio.batch};
}

template <typename T>
EmbeddingSequence<T> fuse(const EmbeddingSequence<T>& aligned,
                          const EmbeddingSequence<T>& audio,
                          const WeightSequence<T>& weights) {
  require_same_frames(aligned, audio, "fuse");
  if (aligned.dim() != audio.dim()) {
    throw ShapeError("fuse: widths differ (" + shape_string(aligned.values.shape()) +
                     " vs " + shape_string(audio.values.shape()) + ")");
  }
  if (weights.values.numel() != aligned.values.dim(0)) {
    throw ShapeError("fuse: weight sequence " + shape_string(weights.values.shape()) +
                     " does not match " + shape_string(aligned.values.shape()));
  }
  auto f = scale_rows(aligned.values, sqrt(weights.values)) +
           scale_rows(audio.values, sqrt(rsub_scalar(T(1), weights.values)));
  return EmbeddingSequence<T>{f, SequenceRole::kFusion, audio.batch};
}

template <typename T>
EmbeddingSequence<T> fuse_baseline_concat(const EmbeddingSequence<T>& chord_emb,
                                          const EmbeddingSequence<T>& audio,
                                          const ConcatParams<T>& params) {
  require_same_frames(chord_emb, audio, "fuse_baseline_concat");
  auto f = add_bias(matmul(concat_last(chord_emb.values, audio.values), params.w), params.b);
  return EmbeddingSequence<T>{f, SequenceRole::kFusion, audio.batch};
}

template <typename T>
EmbeddingSequence<T> fuse_baseline_xattn(const EmbeddingSequence<T>& chord_enc,
                                         const EmbeddingSequence<T>& audio,
                                         const AlignParams<T>& params, std::size_t heads) {
  auto c = align(chord_enc, audio, params, heads);
  return EmbeddingSequence<T>{c.values + audio.values, SequenceRole::kFusion, audio.batch};
}

template <typename T>
EmbeddingSequence<T> fusion_forward_encoded(const EmbeddingSequence<T>& chord_emb,
                                            const EmbeddingSequence<T>& chord_enc,
                                            const EmbeddingSequence<T>& lyric_audio_emb,
                                            const FusionParams<T>& params,
                                            const FusionConfig& config,
                                            const ForwardContext& ctx,
                                            FusionTrace<T>* trace) {
  auto a = encode_audio_path(lyric_audio_emb, params, config, ctx);
  if (trace) trace->audio_encoded = a;
  switch (config.mode) {
    case FusionMode::kDws: {
      auto c = align(chord_enc, a, params.align, config.heads);
      auto w = dynamic_weights(c, a, params.weights);
      if (trace) {
        trace->aligned = c;
        trace->weights = w;
      }
      return fuse(c, a, w);
    }
    case FusionMode::kXattn: {
      auto c = align(chord_enc, a, params.align, config.heads);
      if (trace) trace->aligned = c;
      return EmbeddingSequence<T>{c.values + a.values, SequenceRole::kFusion, a.batch};
    }
    case FusionMode::kConcat:
      require_dim(chord_emb, config.dim, "fuse_baseline_concat");
      return fuse_baseline_concat(chord_emb, a, params.concat);
    case FusionMode::kNone:
      return EmbeddingSequence<T>{a.values, SequenceRole::kFusion, a.batch};
  }
  return a;
}

template <typename T>
EmbeddingSequence<T> fusion_forward(const EmbeddingSequence<T>& chord_emb,
                                    const EmbeddingSequence<T>& lyric_audio_emb,
                                    const FusionParams<T>& params,
                                    const FusionConfig& config, const ForwardContext& ctx,
                                    FusionTrace<T>* trace) {
  EmbeddingSequence<T> chord_enc;
  if (uses_chord_path(config.mode)) {
    chord_enc = encode_chord_path(chord_emb, params, config, ctx);
    if (trace) trace->chord_encoded = chord_enc;
  }
  return fusion_forward_encoded(chord_emb, chord_enc, lyric_audio_emb, params, config, ctx,
                                trace);
}

#define CSG_INSTANTIATE_FUSION(T)                                                        \
  template TransformerBlockParams<T> make_block_params<T>(                               \
      ParameterStore<T>&, const std::string&, std::size_t, std::size_t, Rng&);           \
  template FusionParams<T> make_fusion_params<T>(ParameterStore<T>&,                     \
                                                 const FusionConfig&, Rng&,              \
                                                 const std::string&);                    \
  template Tensor<T> transformer_block<T>(const Tensor<T>&, std::size_t,                 \
                                          const TransformerBlockParams<T>&, std::size_t, \
                                          bool, double, const ForwardContext&);          \
  template EmbeddingSequence<T> encode_chord_path<T>(                                    \
      const EmbeddingSequence<T>&, const FusionParams<T>&, const FusionConfig&,          \
      const ForwardContext&);                                                            \
  template EmbeddingSequence<T> encode_audio_path<T>(                                    \
      const EmbeddingSequence<T>&, const FusionParams<T>&, const FusionConfig&,          \
      const ForwardContext&);                                                            \
  template EmbeddingSequence<T> align<T>(const EmbeddingSequence<T>&,                    \
                                         const EmbeddingSequence<T>&,                    \
                                         const AlignParams<T>&, std::size_t);            \
  template WeightSequence<T> dynamic_weights<T>(const EmbeddingSequence<T>&,             \
                                                const EmbeddingSequence<T>&,             \
                                                const DynamicWeightParams<T>&);          \
  template EmbeddingSequence<T> fuse<T>(const EmbeddingSequence<T>&,                     \
                                        const EmbeddingSequence<T>&,                     \
                                        const WeightSequence<T>&);                       \
  template EmbeddingSequence<T> fuse_baseline_concat<T>(                                 \
      const EmbeddingSequence<T>&, const EmbeddingSequence<T>&, const ConcatParams<T>&); \
  template EmbeddingSequence<T> fuse_baseline_xattn<T>(                                  \
      const EmbeddingSequence<T>&, const EmbeddingSequence<T>&, const AlignParams<T>&,   \
      std::size_t);                                                                      \
  template EmbeddingSequence<T> fusion_forward<T>(                                       \
      const EmbeddingSequence<T>&, const EmbeddingSequence<T>&, const FusionParams<T>&,  \
      const FusionConfig&, const ForwardContext&, FusionTrace<T>*);                      \
  template EmbeddingSequence<T> fusion_forward_encoded<T>(                               \
      const EmbeddingSequence<T>&, const EmbeddingSequence<T>&,                          \
      const EmbeddingSequence<T>&, const FusionParams<T>&, const FusionConfig&,          \
      const ForwardContext&, FusionTrace<T>*);

CSG_INSTANTIATE_FUSION(float)
CSG_INSTANTIATE_FUSION(double)

#undef CSG_INSTANTIATE_FUSION

}  // namespace csg
