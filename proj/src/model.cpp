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

#include "csg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "csg/error.hpp"

namespace csg {

namespace {

constexpr double kTokenInitStd = 0.5;
constexpr double kPositionScale = 0.5;
constexpr double kHeadInitStd = 0.02;

// Seeds the learned position table with a sinusoidal pattern.
template <typename T>
std::vector<T> sinusoid_table(std::size_t frames, std::size_t dim) {
  std::vector<T> out(frames * dim);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) * freq;
      out[t * dim + i] =
          static_cast<T>(kPositionScale * (i % 2 == 0 ? std::sin(angle) : std::cos(angle)));
    }
  }
  return out;
}

void check_stream(std::span<const int> ids, std::size_t vocab, const char* name) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError(std::string(name) + " token " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

}  // namespace

// ---- config ----------------------------------------------------------------

void ModelConfig::validate() const {
  fusion().validate();
  for (auto [v, name] : {std::pair{chord_vocab, "chord_vocab"}, {lyric_vocab, "lyric_vocab"},
                         {vocal_vocab, "vocal_vocab"}, {song_vocab, "song_vocab"}}) {
    if (v < 2) throw ValidationError(std::string(name) + " must be at least 2");
  }
  if (max_frames == 0) throw ValidationError("max_frames must be positive");
}

FusionConfig ModelConfig::fusion() const {
  FusionConfig f;
  f.dim = dim;
  f.chord_path_layers = chord_path_layers;
  f.audio_path_layers = audio_path_layers;
  f.heads = heads;
  f.ffn_mult = ffn_mult;
  f.dropout = dropout;
  f.mode = mode;
  return f;
}

void ModelConfig::write_to(KeyValueConfig& kv) const {
  kv.set("dim", std::to_string(dim));
  kv.set("heads", std::to_string(heads));
  kv.set("chord_path_layers", std::to_string(chord_path_layers));
  kv.set("audio_path_layers", std::to_string(audio_path_layers));
  kv.set("gpt_layers", std::to_string(gpt_layers));
  kv.set("ffn_mult", std::to_string(ffn_mult));
  std::ostringstream os;
  os.precision(17);
  os << dropout;
  kv.set("dropout", os.str());
  kv.set("chord_vocab", std::to_string(chord_vocab));
  kv.set("lyric_vocab", std::to_string(lyric_vocab));
  kv.set("vocal_vocab", std::to_string(vocal_vocab));
  kv.set("song_vocab", std::to_string(song_vocab));
  kv.set("max_frames", std::to_string(max_frames));
  kv.set("mode", std::string(fusion_mode_name(mode)));
}

ModelConfig ModelConfig::from(const KeyValueConfig& kv) {
  ModelConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ValidationError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.dim = size("dim", c.dim);
  c.heads = size("heads", c.heads);
  c.chord_path_layers = size("chord_path_layers", c.chord_path_layers);
  c.audio_path_layers = size("audio_path_layers", c.audio_path_layers);
  c.gpt_layers = size("gpt_layers", c.gpt_layers);
  c.ffn_mult = size("ffn_mult", c.ffn_mult);
  c.dropout = kv.get_double("dropout", c.dropout);
  c.chord_vocab = size("chord_vocab", c.chord_vocab);
  c.lyric_vocab = size("lyric_vocab", c.lyric_vocab);
  c.vocal_vocab = size("vocal_vocab", c.vocal_vocab);
  c.song_vocab = size("song_vocab", c.song_vocab);
  c.max_frames = size("max_frames", c.max_frames);
  c.mode = parse_fusion_mode(kv.get("mode", std::string(fusion_mode_name(c.mode))));
  c.validate();
  return c;
}

// ---- sampling --------------------------------------------------------------

Sampler Sampler::parse(std::string_view text) {
  Sampler s;
  if (text == "greedy") return s;
  auto number = [&](std::string_view rest) {
    try {
      std::size_t used = 0;
      const std::string str(rest);
      double v = std::stod(str, &used);
      if (used != str.size()) throw std::invalid_argument(str);
      return v;
    } catch (const std::exception&) {
      throw ParseError("sampler: bad number in '" + std::string(text) + "'");
    }
  };
  if (text.rfind("topk:", 0) == 0) {
    const double k = number(text.substr(5));
    if (k < 1 || k != std::floor(k)) throw ParseError("sampler: k must be a positive integer");
    s.kind = Kind::kTopK;
    s.k = static_cast<std::size_t>(k);
    return s;
  }
  if (text.rfind("temp:", 0) == 0) {
    const double tau = number(text.substr(5));
    if (!(tau > 0)) throw ParseError("sampler: temperature must be positive");
    s.kind = Kind::kTemperature;
    s.temperature = tau;
    return s;
  }
  throw ParseError("sampler: expected greedy, topk:<k> or temp:<tau>, got '" +
                   std::string(text) + "'");
}

std::string Sampler::to_string() const {
  switch (kind) {
    case Kind::kGreedy: return "greedy";
    case Kind::kTopK: return "topk:" + std::to_string(k);
    case Kind::kTemperature: {
      std::ostringstream os;
      os << "temp:" << temperature;
      return os.str();
    }
  }
  return "greedy";
}

int sample_token(std::span<const double> logits, const Sampler& sampler, Rng& rng) {
  if (logits.empty()) throw ContractError("sample_token: empty logits");
  if (sampler.kind == Sampler::Kind::kGreedy) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  std::vector<std::size_t> candidates(logits.size());
  std::iota(candidates.begin(), candidates.end(), 0);
  double tau = 1.0;
  if (sampler.kind == Sampler::Kind::kTopK) {
    const std::size_t k = std::min(sampler.k, logits.size());
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    candidates.resize(k);
    std::sort(candidates.begin(), candidates.end());
  } else {
    tau = sampler.temperature;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (auto c : candidates) mx = std::max(mx, logits[c] / tau);
  std::vector<double> weights(candidates.size());
  double total = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    weights[i] = std::exp(logits[candidates[i]] / tau - mx);
    total += weights[i];
  }
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
  double acc = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(candidates[i]);
  }
  return static_cast<int>(candidates.back());
}

// ---- model -----------------------------------------------------------------

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.dim;
  tables_.chord = store_.add_normal("embed.chord", {config_.chord_vocab, d}, kTokenInitStd, rng);
  tables_.lyric = store_.add_normal("embed.lyric", {config_.lyric_vocab, d}, kTokenInitStd, rng);
  tables_.vocal =
      store_.add_normal("embed.vocal", {config_.vocal_vocab + 1, d}, kTokenInitStd, rng);
  tables_.song =
      store_.add_normal("embed.song", {config_.song_vocab + 1, d}, kTokenInitStd, rng);
  tables_.position = store_.add("embed.position", {config_.max_frames, d},
                                sinusoid_table<T>(config_.max_frames, d));
  fusion_ = make_fusion_params<T>(store_, config_.fusion(), rng);
  for (std::size_t i = 0; i < config_.gpt_layers; ++i) {
    gpt_blocks_.push_back(make_block_params<T>(store_, "gpt." + std::to_string(i) + ".", d,
                                               config_.ffn_mult, rng));
  }
  final_ln_gain_ = store_.add_constant("gpt.final_ln.gain", {d}, T(1));
  final_ln_bias_ = store_.add_constant("gpt.final_ln.bias", {d}, T(0));
  vocal_head_ = store_.add_normal("head.vocal", {d, config_.vocal_vocab}, kHeadInitStd, rng);
  song_head_ = store_.add_normal("head.song", {d, config_.song_vocab}, kHeadInitStd, rng);
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model<T> copy(config_, 0);
  const auto& src = store_.entries();
  const auto& dst = copy.store_.entries();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto target = dst[i].second;
    std::copy(src[i].second.data().begin(), src[i].second.data().end(),
              target.mutable_data().begin());
  }
  return copy;
}

template <typename T>
void Model<T>::check_frames(std::size_t frames) const {
  if (frames == 0) throw ContractError("sequence has no frames");
  if (frames > config_.max_frames) {
    throw CapacityError("sequence of " + std::to_string(frames) +
                        " frames exceeds max_frames " + std::to_string(config_.max_frames));
  }
}

template <typename T>
EmbeddingSequence<T> Model<T>::embed_chords(std::span<const int> ids,
                                            std::size_t batch) const {
  const std::size_t frames = ids.size() / batch;
  std::vector<int> positions(ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i % frames);
  auto x = embedding_lookup(tables_.chord, ids) + embedding_lookup(tables_.position, positions);
  return EmbeddingSequence<T>{x, SequenceRole::kChord, batch};
}

template <typename T>
EmbeddingSequence<T> Model<T>::embed_lyric_audio(std::span<const int> lyric,
                                                 std::span<const int> prev_vocal,
                                                 std::span<const int> prev_song,
                                                 std::size_t batch) const {
  const std::size_t frames = lyric.size() / batch;
  std::vector<int> positions(lyric.size()), vocal_ids(lyric.size()), song_ids(lyric.size());
  const int vocal_bos = static_cast<int>(config_.vocal_vocab);
  const int song_bos = static_cast<int>(config_.song_vocab);
  for (std::size_t i = 0; i < lyric.size(); ++i) {
    positions[i] = static_cast<int>(i % frames);
    vocal_ids[i] = prev_vocal[i] < 0 ? vocal_bos : prev_vocal[i];
    song_ids[i] = prev_song[i] < 0 ? song_bos : prev_song[i];
  }
  auto x = embedding_lookup(tables_.lyric, lyric) +
           embedding_lookup(tables_.vocal, std::span<const int>(vocal_ids)) +
           embedding_lookup(tables_.song, std::span<const int>(song_ids)) +
           embedding_lookup(tables_.position, std::span<const int>(positions));
  return EmbeddingSequence<T>{x, SequenceRole::kLyricAudio, batch};
}

template <typename T>
CombinedInputs<T> Model<T>::combine_inputs(std::span<const SongExample> batch) const {
  if (batch.empty()) throw ContractError("combine_inputs: empty batch");
  const std::size_t frames = batch.front().frames();
  check_frames(frames);
  const std::size_t n = batch.size() * frames;
  std::vector<int> chord, lyric, prev_vocal, prev_song;
  chord.reserve(n);
  lyric.reserve(n);
  prev_vocal.reserve(n);
  prev_song.reserve(n);
  for (const auto& ex : batch) {
    if (ex.chord.size() != frames || ex.lyric.size() != frames ||
        ex.vocal.size() != frames || ex.song.size() != frames) {
      throw ContractError("combine_inputs: all streams of all examples need " +
                          std::to_string(frames) + " frames");
    }
    check_stream(ex.chord, config_.chord_vocab, "chord");
    check_stream(ex.lyric, config_.lyric_vocab, "lyric");
    check_stream(ex.vocal, config_.vocal_vocab, "vocal");
    check_stream(ex.song, config_.song_vocab, "song");
    chord.insert(chord.end(), ex.chord.begin(), ex.chord.end());
    lyric.insert(lyric.end(), ex.lyric.begin(), ex.lyric.end());
    prev_vocal.push_back(-1);
    prev_vocal.insert(prev_vocal.end(), ex.vocal.begin(), ex.vocal.end() - 1);
    if (ex.hide_song_history) {
      prev_song.insert(prev_song.end(), frames, -1);
    } else {
      prev_song.push_back(-1);
      prev_song.insert(prev_song.end(), ex.song.begin(), ex.song.end() - 1);
    }
  }
  return CombinedInputs<T>{embed_chords(chord, batch.size()),
                           embed_lyric_audio(lyric, prev_vocal, prev_song, batch.size())};
}

template <typename T>
Tensor<T> Model<T>::decoder_trunk(const EmbeddingSequence<T>& fused,
                                  const ForwardContext& ctx) const {
  Tensor<T> x = fused.values;
  for (const auto& block : gpt_blocks_) {
    x = transformer_block(x, fused.batch, block, config_.heads, true, config_.dropout, ctx);
  }
  return layernorm(x, final_ln_gain_, final_ln_bias_);
}

template <typename T>
ForwardOutput<T> Model<T>::forward_teacher_forced(std::span<const SongExample> batch,
                                                  const ForwardContext& ctx) const {
  auto inputs = combine_inputs(batch);
  auto fused = fusion_forward(inputs.chord, inputs.lyric_audio, fusion_, config_.fusion(), ctx);
  auto h = decoder_trunk(fused, ctx);
  ForwardOutput<T> out;
  out.vocal_logits = matmul(h, vocal_head_);
  out.song_logits = matmul(h, song_head_);
  std::vector<int> vocal_targets, song_targets;
  for (const auto& ex : batch) {
    vocal_targets.insert(vocal_targets.end(), ex.vocal.begin(), ex.vocal.end());
    song_targets.insert(song_targets.end(), ex.song.begin(), ex.song.end());
  }
  out.loss = cross_entropy(out.vocal_logits, std::span<const int>(vocal_targets)) +
             cross_entropy(out.song_logits, std::span<const int>(song_targets));
  return out;
}

template <typename T>
std::vector<Generation> Model<T>::generate(std::span<const std::vector<int>> chords,
                                           std::span<const std::vector<int>> lyrics,
                                           const Sampler& sampler,
                                           std::uint64_t seed) const {
  if (chords.empty() || chords.size() != lyrics.size()) {
    throw ContractError("generate: need one lyric stream per chord stream");
  }
  const std::size_t batch = chords.size();
  const std::size_t frames = chords.front().size();
  check_frames(frames);
  std::vector<int> all_chords;
  for (std::size_t b = 0; b < batch; ++b) {
    if (chords[b].size() != frames || lyrics[b].size() != frames) {
      throw ContractError("generate: chord and lyric streams need equal frame counts");
    }
    check_stream(chords[b], config_.chord_vocab, "chord");
    check_stream(lyrics[b], config_.lyric_vocab, "lyric");
    all_chords.insert(all_chords.end(), chords[b].begin(), chords[b].end());
  }

  NoGradGuard<T> no_grad;
  const ForwardContext ctx{};
  const FusionConfig fusion_config = config_.fusion();
  const auto chord_full = embed_chords(all_chords, batch);
  EmbeddingSequence<T> chord_enc;
  if (uses_chord_path(config_.mode)) {
    chord_enc = encode_chord_path(chord_full, fusion_, fusion_config, ctx);
  }

  Rng rng(seed);
  std::vector<Generation> out(batch);
  for (auto& g : out) {
    g.vocal.assign(frames, 0);
    g.song.assign(frames, 0);
  }
  const std::size_t d = config_.dim;
  std::vector<double> row;
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t prefix = t + 1;
    std::vector<int> lyric, prev_vocal, prev_song, chord_prefix;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < prefix; ++i) {
        lyric.push_back(lyrics[b][i]);
        prev_vocal.push_back(i == 0 ? -1 : out[b].vocal[i - 1]);
        prev_song.push_back(i == 0 ? -1 : out[b].song[i - 1]);
        if (config_.mode == FusionMode::kConcat) chord_prefix.push_back(chords[b][i]);
      }
    }
    auto audio = embed_lyric_audio(lyric, prev_vocal, prev_song, batch);
    const auto chord_in =
        config_.mode == FusionMode::kConcat ? embed_chords(chord_prefix, batch) : chord_full;
    auto fused = fusion_forward_encoded(chord_in, chord_enc, audio, fusion_, fusion_config, ctx);
    auto h = decoder_trunk(fused, ctx);
    std::vector<T> last(batch * d);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* src = h.data().data() + (b * prefix + t) * d;
      std::copy_n(src, d, last.data() + b * d);
    }
    auto last_t = Tensor<T>::from_data({batch, d}, std::move(last));
    auto vocal_logits = matmul(last_t, vocal_head_);
    auto song_logits = matmul(last_t, song_head_);
    for (std::size_t b = 0; b < batch; ++b) {
      auto vl = vocal_logits.data().subspan(b * config_.vocal_vocab, config_.vocal_vocab);
      row.assign(vl.begin(), vl.end());
      out[b].vocal[t] = sample_token(row, sampler, rng);
      auto sl = song_logits.data().subspan(b * config_.song_vocab, config_.song_vocab);
      row.assign(sl.begin(), sl.end());
      out[b].song[t] = sample_token(row, sampler, rng);
    }
  }
  return out;
}

template <typename T>
Generation Model<T>::generate(const std::vector<int>& chords, const std::vector<int>& lyrics,
                              const Sampler& sampler, std::uint64_t seed) const {
  return generate(std::span<const std::vector<int>>(&chords, 1),
                  std::span<const std::vector<int>>(&lyrics, 1), sampler, seed)
      .front();
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'S', 'G', 'C', 'K', 'P', 'T', '\0'};

template <typename V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename V>
  V get() {
    V v;
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  std::string bytes(std::size_t n) { return std::string(take(n), n); }
  bool done() const { return pos_ == data_.size(); }

 private:
  const char* take(std::size_t n) {
    if (data_.size() - pos_ < n) throw IoError("checkpoint " + path_ + " is truncated");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

struct RawCheckpoint {
  ModelConfig config;
  std::uint32_t scalar_bytes = 0;
  std::vector<std::pair<std::string, std::pair<Shape, std::string>>> params;
};

RawCheckpoint read_raw_checkpoint(const std::filesystem::path& path, bool config_only) {
  Reader r(read_file(path), path.string());
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  RawCheckpoint raw;
  raw.scalar_bytes = r.get<std::uint32_t>();
  if (raw.scalar_bytes != 4 && raw.scalar_bytes != 8) {
    throw IoError("checkpoint scalar width " + std::to_string(raw.scalar_bytes));
  }
  const auto config_len = r.get<std::uint64_t>();
  raw.config = ModelConfig::from(KeyValueConfig::parse(r.bytes(config_len)));
  if (config_only) return raw;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.bytes(name_len);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& s : shape) s = static_cast<std::size_t>(r.get<std::uint64_t>());
    raw.params.emplace_back(std::move(name),
                            std::pair{shape, r.bytes(shape_numel(shape) * raw.scalar_bytes)});
  }
  if (!r.done()) throw IoError("checkpoint " + path.string() + " has trailing bytes");
  return raw;
}

template <typename Dst, typename Src>
void copy_values(const std::string& bytes, std::span<Dst> dst) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    Src v;
    std::memcpy(&v, bytes.data() + i * sizeof(Src), sizeof(Src));
    dst[i] = static_cast<Dst>(v);
  }
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sizeof(T)));
  KeyValueConfig kv;
  model.config().write_to(kv);
  const std::string config_text = kv.format();
  put<std::uint64_t>(out, config_text.size());
  out += config_text;
  const auto& entries = model.parameters().entries();
  put<std::uint64_t>(out, entries.size());
  for (const auto& [name, tensor] : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto s : tensor.shape()) put<std::uint64_t>(out, s);
    out.append(reinterpret_cast<const char*>(tensor.data().data()), tensor.numel() * sizeof(T));
  }
  write_file_atomic(path, out);
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  auto raw = read_raw_checkpoint(path, false);
  Model<T> model(raw.config, 0);
  const auto& entries = model.parameters().entries();
  if (entries.size() != raw.params.size()) {
    throw IoError("checkpoint holds " + std::to_string(raw.params.size()) +
                  " parameters, model expects " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, tensor] = entries[i];
    const auto& [raw_name, payload] = raw.params[i];
    if (raw_name != name || payload.first != tensor.shape()) {
      throw IoError("checkpoint parameter '" + raw_name + "' " +
                    shape_string(payload.first) + " does not match '" + name + "' " +
                    shape_string(tensor.shape()));
    }
    auto dst = Tensor<T>(tensor).mutable_data();
    if (raw.scalar_bytes == 4) {
      copy_values<T, float>(payload.second, dst);
    } else {
      copy_values<T, double>(payload.second, dst);
    }
  }
  return model;
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  return read_raw_checkpoint(path, true).config;
}

template class Model<float>;
template class Model<double>;
template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace csg
