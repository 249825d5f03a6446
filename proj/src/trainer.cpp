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

#include "csg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "csg/error.hpp"
#include "csg/metrics.hpp"

namespace csg {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string format_short(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Serves large activation buffers from the heap rather than fresh mappings.
void keep_large_allocations() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace

// ---- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (steps == 0) throw ValidationError("train.steps must be positive");
  if (batch_size == 0) throw ValidationError("train.batch_size must be positive");
  if (!(lr_target > 0.0)) throw ValidationError("train.lr_target must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train: adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ValidationError("train.eps must be positive");
  if (grad_clip < 0.0) throw ValidationError("train.grad_clip must be non-negative");
  if (!(history_dropout >= 0.0 && history_dropout <= 1.0)) {
    throw ValidationError("train.history_dropout must lie in [0, 1]");
  }
}

void TrainConfig::write_to(KeyValueConfig& kv) const {
  kv.set("train.steps", std::to_string(steps));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.lr_target", format_double(lr_target));
  kv.set("train.warmup_steps", std::to_string(warmup_steps));
  kv.set("train.beta1", format_double(beta1));
  kv.set("train.beta2", format_double(beta2));
  kv.set("train.eps", format_double(eps));
  kv.set("train.grad_clip", format_double(grad_clip));
  kv.set("train.history_dropout", format_double(history_dropout));
  kv.set("train.eval_every", std::to_string(eval_every));
  kv.set("train.eval_examples", std::to_string(eval_examples));
  kv.set("train.seed", std::to_string(seed));
}

TrainConfig TrainConfig::from(const KeyValueConfig& kv) {
  TrainConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ValidationError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.steps = size("train.steps", c.steps);
  c.batch_size = size("train.batch_size", c.batch_size);
  c.lr_target = kv.get_double("train.lr_target", c.lr_target);
  c.warmup_steps = size("train.warmup_steps", c.warmup_steps);
  c.beta1 = kv.get_double("train.beta1", c.beta1);
  c.beta2 = kv.get_double("train.beta2", c.beta2);
  c.eps = kv.get_double("train.eps", c.eps);
  c.grad_clip = kv.get_double("train.grad_clip", c.grad_clip);
  c.history_dropout = kv.get_double("train.history_dropout", c.history_dropout);
  c.eval_every = size("train.eval_every", c.eval_every);
  c.eval_examples = size("train.eval_examples", c.eval_examples);
  c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& config, std::size_t step) {
  if (config.warmup_steps == 0) return config.lr_target;
  const double frac = static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  return config.lr_target * std::min(1.0, frac);
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  synth.validate();
  if (synth.frames > model.max_frames) {
    throw ValidationError("synth.frames exceeds model.max_frames");
  }
  if (synth.lyric_vocab != model.lyric_vocab || synth.vocal_vocab != model.vocal_vocab ||
      synth.song_vocab != model.song_vocab) {
    throw ValidationError("synth and model vocabularies differ");
  }
}

std::string RunConfig::format() const {
  KeyValueConfig model_kv, kv;
  model.write_to(model_kv);
  for (const auto& [k, v] : model_kv.values()) kv.set("model." + k, v);
  train.write_to(kv);
  synth.write_to(kv);
  return kv.format();
}

RunConfig RunConfig::from(const KeyValueConfig& kv) {
  const auto known = KeyValueConfig::parse(RunConfig{}.format());
  KeyValueConfig model_kv;
  for (const auto& [k, v] : kv.values()) {
    if (!known.has(k)) throw ParseError("unknown config key '" + k + "'");
    if (k.rfind("model.", 0) == 0) model_kv.set(k.substr(6), v);
  }
  RunConfig c;
  c.model = ModelConfig::from(model_kv);
  c.train = TrainConfig::from(kv);
  c.synth = SynthSpec::from(kv);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return from(KeyValueConfig::load(path));
}

// ---- optimizer -------------------------------------------------------------

template <typename T>
Adam<T>::Adam(ParameterStore<T>& store, double beta1, double beta2, double eps)
    : store_(store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, p] : store_.entries()) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto& entries = store_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor<T> p = entries[i].second;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      w[j] -= static_cast<T>(lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_));
    }
  }
}

template <typename T>
double clip_grad_norm(ParameterStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : store.entries()) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const T scale = static_cast<T>(max_norm / norm);
    for (const auto& [name, p] : store.entries()) {
      if (!p.has_grad()) continue;
      Tensor<T> q = p;
      for (T& g : q.mutable_grad()) g *= scale;
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(ParameterStore<float>&, double);
template double clip_grad_norm<double>(ParameterStore<double>&, double);

// ---- training --------------------------------------------------------------

double evaluate_sim(const Model<float>& model, const Dataset& eval, std::size_t max_examples,
                    std::size_t batch_size) {
  const std::size_t n = std::min(max_examples, eval.examples.size());
  if (n == 0) throw ValidationError("evaluation needs at least one example");
  const EmissionRule rule = eval.spec.emission();
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<std::vector<int>> chords, lyrics;
    for (std::size_t i = start; i < end; ++i) {
      chords.push_back(eval.examples[i].chord_clean);
      lyrics.push_back(eval.examples[i].lyric);
    }
    const auto gens = model.generate(chords, lyrics, Sampler{}, 0);
    for (std::size_t i = start; i < end; ++i) {
      const auto extracted = extract_chords_from_tokens(gens[i - start].song, rule);
      total += sim(extracted, eval.examples[i].chord_clean).sim;
    }
  }
  return total / static_cast<double>(n);
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const DatasetSplits& data, const ProgressFn& progress) {
  model_config.validate();
  config.validate();
  keep_large_allocations();
  const auto& examples = data.train.examples;
  if (examples.empty()) throw ValidationError("training split is empty");
  for (const auto& ex : examples) {
    if (ex.frames() != examples.front().frames()) {
      throw ValidationError("training examples must share one frame count");
    }
  }

  TrainResult result{Model<float>(model_config, mix_seed(config.seed, 0x6d6f64656cULL)), {}, 0.0,
                     0.0};
  Model<float>& model = result.model;
  Adam<float> adam(model.parameters(), config.beta1, config.beta2, config.eps);
  Rng batch_rng(mix_seed(config.seed, 0x6261746368ULL));
  Rng dropout_rng(mix_seed(config.seed, 0x64726f70ULL));
  Rng history_rng(mix_seed(config.seed, 0x68697374ULL));

  std::vector<std::size_t> order(examples.size());
  std::size_t cursor = order.size();
  std::vector<SongExample> batch;
  GradTape<float> tape;

  for (std::size_t step = 1; step <= config.steps; ++step) {
    batch.clear();
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        // Fisher-Yates with raw draws keeps the order platform independent.
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[batch_rng() % i]);
        }
        cursor = 0;
      }
      batch.push_back(examples[order[cursor++]].training_example());
      batch.back().hide_song_history =
          config.history_dropout > 0.0 &&
          static_cast<double>(history_rng() >> 11) * 0x1.0p-53 < config.history_dropout;
    }

    const double lr = learning_rate(config, step);
    model.parameters().zero_grad();
    tape.reset();
    double loss;
    {
      TapeScope<float> scope(tape);
      const ForwardContext ctx{true, &dropout_rng};
      auto out = model.forward_teacher_forced(batch, ctx);
      loss = out.loss.item();
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (lr " +
                           format_short(lr) + ")");
      }
      tape.backward(out.loss);
    }
    tape.reset();
    const double norm = clip_grad_norm(model.parameters(), config.grad_clip);
    if (!std::isfinite(norm)) {
      throw NumericError("non-finite gradient at step " + std::to_string(step) + " (lr " +
                         format_short(lr) + ", grad-norm " + format_short(norm) + ")");
    }
    adam.step(lr);

    CurvePoint point{step, loss, lr, -1.0};
    const bool last = step == config.steps;
    if (last || (config.eval_every && step % config.eval_every == 0)) {
      point.sim = evaluate_sim(model, data.eval, config.eval_examples);
    }
    result.curve.push_back(point);
    if (progress) progress(point);
  }
  result.final_loss = result.curve.back().loss;
  result.final_sim = result.curve.back().sim;
  return result;
}

// ---- ablation --------------------------------------------------------------

const AblationSummary& AblationResult::summary(FusionMode mode) const {
  for (const auto& s : summaries) {
    if (s.mode == mode) return s;
  }
  throw ContractError("no ablation runs for mode " + std::string(fusion_mode_name(mode)));
}

AblationResult run_ablation(const RunConfig& base, const std::vector<FusionMode>& modes,
                            const std::vector<std::uint64_t>& seeds,
                            const AblationProgressFn& progress) {
  base.validate();
  if (modes.empty() || seeds.empty()) throw ValidationError("ablation needs modes and seeds");
  AblationResult result;
  for (std::uint64_t seed : seeds) {
    SynthSpec spec = base.synth;
    spec.seed = seed;
    const DatasetSplits data = generate_dataset(spec);
    for (FusionMode mode : modes) {
      ModelConfig mc = base.model;
      mc.mode = mode;
      TrainConfig tc = base.train;
      tc.seed = seed;
      auto run = train(mc, tc, data);
      AblationRow row{mode, seed, run.final_sim, run.final_loss, std::move(run.curve)};
      if (progress) progress(row);
      result.rows.push_back(std::move(row));
    }
  }
  for (FusionMode mode : modes) {
    AblationSummary s;
    s.mode = mode;
    std::vector<double> sims;
    for (const auto& r : result.rows) {
      if (r.mode != mode) continue;
      sims.push_back(r.sim);
      s.mean_loss += r.final_loss;
    }
    s.runs = sims.size();
    s.mean_sim = std::accumulate(sims.begin(), sims.end(), 0.0) / static_cast<double>(s.runs);
    s.mean_loss /= static_cast<double>(s.runs);
    if (s.runs > 1) {
      double ss = 0.0;
      for (double v : sims) ss += (v - s.mean_sim) * (v - s.mean_sim);
      s.std_sim = std::sqrt(ss / static_cast<double>(s.runs - 1));
    }
    result.summaries.push_back(s);
  }
  return result;
}

std::string format_ablation_table(const AblationResult& result) {
  std::ostringstream os;
  os << "mode,seed,sim,final_loss\n";
  for (const auto& r : result.rows) {
    os << fusion_mode_name(r.mode) << ',' << r.seed << ',' << format_double(r.sim) << ','
       << format_double(r.final_loss) << '\n';
  }
  return os.str();
}

std::string format_ablation_summary(const AblationResult& result) {
  std::ostringstream os;
  os << "mode,runs,mean_sim,std_sim,mean_loss\n";
  for (const auto& s : result.summaries) {
    os << fusion_mode_name(s.mode) << ',' << s.runs << ',' << format_double(s.mean_sim) << ','
       << format_double(s.std_sim) << ',' << format_double(s.mean_loss) << '\n';
  }
  return os.str();
}

std::string format_curve(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "step,loss,sim\n";
  for (const auto& p : curve) {
    os << p.step << ',' << format_double(p.loss) << ',';
    if (p.sim >= 0.0) os << format_double(p.sim);
    os << '\n';
  }
  return os.str();
}

}  // namespace csg
