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

#include "csg/csg.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "csg/chord.hpp"
#include "csg/error.hpp"
#include "csg/io.hpp"
#include "csg/metrics.hpp"
#include "csg/model.hpp"
#include "csg/synth.hpp"
#include "csg/trainer.hpp"

struct csg_frames {
  csg::FrameSequence seq;
};

struct csg_config {
  csg::KeyValueConfig kv;
};

struct csg_dataset {
  csg::DatasetSplits splits;
};

struct csg_model {
  csg::Model<float> model;
};

struct csg_ablation {
  csg::AblationResult result;
};

namespace {

thread_local std::string g_last_error;

csg_status fail(csg_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
csg_status guarded(Fn&& fn) {
  try {
    fn();
    return CSG_OK;
  } catch (const csg::Error& e) {
    return fail(static_cast<csg_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CSG_ERR_CAPACITY, "out of memory");
  } catch (const std::exception& e) {
    return fail(CSG_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define CSG_REQUIRE(ptr)                                                     \
  do {                                                                       \
    if (!(ptr)) return fail(CSG_ERR_ARGUMENT, "null argument: " #ptr);      \
  } while (0)

csg::RunConfig run_config(const csg_config* config) { return csg::RunConfig::from(config->kv); }

csg::KeyValueConfig default_kv() {
  csg::KeyValueConfig kv;
  kv = csg::KeyValueConfig::parse(csg::RunConfig{}.format());
  return kv;
}

std::vector<csg::FusionMode> parse_modes(const std::string& text) {
  std::vector<csg::FusionMode> modes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) modes.push_back(csg::parse_fusion_mode(item));
  }
  if (modes.empty()) throw csg::ValidationError("no fusion modes given");
  return modes;
}

}  // namespace

extern "C" {

const char* csg_version(void) { return CSG_VERSION; }

const char* csg_last_error(void) { return g_last_error.c_str(); }

const char* csg_status_name(csg_status status) {
  switch (status) {
    case CSG_OK: return "ok";
    case CSG_ERR_ARGUMENT: return "argument error";
    case CSG_ERR_SHAPE: return "shape error";
    case CSG_ERR_INDEX: return "index error";
    case CSG_ERR_PARSE: return "parse error";
    case CSG_ERR_VALIDATION: return "validation error";
    case CSG_ERR_CONTRACT: return "contract error";
    case CSG_ERR_IO: return "io error";
    case CSG_ERR_CAPACITY: return "capacity error";
    case CSG_ERR_NUMERIC: return "numeric error";
    case CSG_ERR_INTERNAL: return "internal error";
  }
  return "unknown error";
}

void csg_string_free(char* s) { std::free(s); }

// ---- chord codec ----

csg_status csg_frames_create(const int* tokens, size_t count, double frame_rate_hz,
                             csg_frames** out) {
  CSG_REQUIRE(out);
  if (count) CSG_REQUIRE(tokens);
  return guarded([&] {
    if (!(frame_rate_hz > 0.0)) throw csg::ValidationError("frame rate must be positive");
    for (size_t i = 0; i < count; ++i) {
      if (tokens[i] < 0 || tokens[i] > csg::kNoChordToken) {
        throw csg::IndexError("chord token " + std::to_string(tokens[i]) + " at frame " +
                              std::to_string(i) + " outside 0..48");
      }
    }
    *out = new csg_frames{csg::FrameSequence{std::vector<int>(tokens, tokens + count),
                                             frame_rate_hz}};
  });
}

csg_status csg_frames_read(const char* path, csg_frames** out) {
  CSG_REQUIRE(path);
  CSG_REQUIRE(out);
  return guarded([&] { *out = new csg_frames{csg::read_frame_sequence(path)}; });
}

csg_status csg_frames_write(const csg_frames* frames, const char* path) {
  CSG_REQUIRE(frames);
  CSG_REQUIRE(path);
  return guarded([&] { csg::write_frame_sequence(path, frames->seq); });
}

size_t csg_frames_length(const csg_frames* frames) { return frames ? frames->seq.size() : 0; }

const int* csg_frames_tokens(const csg_frames* frames) {
  return frames ? frames->seq.tokens.data() : nullptr;
}

double csg_frames_rate(const csg_frames* frames) { return frames ? frames->seq.frame_rate_hz : 0; }

void csg_frames_free(csg_frames* frames) { delete frames; }

csg_status csg_chord_parse(const char* label, int* token) {
  CSG_REQUIRE(label);
  CSG_REQUIRE(token);
  return guarded([&] { *token = csg::parse_chord_token(label); });
}

csg_status csg_chord_name(int token, char** name) {
  CSG_REQUIRE(name);
  return guarded([&] {
    if (token < 0 || token > csg::kNoChordToken) {
      throw csg::IndexError("chord token " + std::to_string(token) + " outside 0..48");
    }
    *name = dup_string(csg::token_name(token));
  });
}

csg_status csg_progression(const char* key, const char* mode, const char* digits, char** names) {
  CSG_REQUIRE(key);
  CSG_REQUIRE(mode);
  CSG_REQUIRE(digits);
  CSG_REQUIRE(names);
  return guarded([&] {
    const auto chords = csg::parse_progression(csg::parse_root(key), csg::parse_mode(mode), digits);
    std::string text;
    for (const auto& c : chords) text += (text.empty() ? "" : " ") + csg::chord_name(c);
    *names = dup_string(text);
  });
}

csg_status csg_progression_frames(const char* key, const char* mode, const char* digits,
                                  size_t frames_per_chord, size_t total_frames,
                                  double frame_rate_hz, csg_frames** out) {
  CSG_REQUIRE(key);
  CSG_REQUIRE(mode);
  CSG_REQUIRE(digits);
  CSG_REQUIRE(out);
  return guarded([&] {
    const auto chords = csg::parse_progression(csg::parse_root(key), csg::parse_mode(mode), digits);
    *out = new csg_frames{
        csg::progression_frames(chords, frames_per_chord, total_frames, frame_rate_hz)};
  });
}

csg_status csg_quantize_lab(const char* lab_path, double frame_rate_hz, double duration_seconds,
                            csg_frames** out) {
  CSG_REQUIRE(lab_path);
  CSG_REQUIRE(out);
  return guarded([&] {
    const auto intervals = csg::read_lab_file(lab_path);
    double duration = duration_seconds;
    if (duration <= 0.0) {
      duration = 0.0;
      for (const auto& iv : intervals) duration = std::max(duration, iv.end);
    }
    *out = new csg_frames{csg::quantize(intervals, frame_rate_hz, duration)};
  });
}

csg_status csg_transpose(const csg_frames* frames, int semitones, csg_frames** out) {
  CSG_REQUIRE(frames);
  CSG_REQUIRE(out);
  return guarded([&] { *out = new csg_frames{csg::transpose(frames->seq, semitones)}; });
}

// ---- metrics ----

csg_status csg_sim(const csg_frames* predicted, const csg_frames* target, csg_sim_report* report) {
  CSG_REQUIRE(predicted);
  CSG_REQUIRE(target);
  CSG_REQUIRE(report);
  return guarded([&] {
    const auto r = csg::sim(predicted->seq, target->seq);
    report->best_shift = r.best_shift;
    report->sim = r.sim;
    for (int k = 0; k < CSG_NUM_SHIFTS; ++k) report->per_shift_accuracy[k] = r.per_shift_accuracy[k];
  });
}

csg_status csg_sim_report_format(const csg_sim_report* report, char** text) {
  CSG_REQUIRE(report);
  CSG_REQUIRE(text);
  return guarded([&] {
    csg::SimReport r;
    r.best_shift = report->best_shift;
    r.sim = report->sim;
    for (int k = 0; k < CSG_NUM_SHIFTS; ++k) r.per_shift_accuracy[k] = report->per_shift_accuracy[k];
    *text = dup_string(r.format());
  });
}

csg_status csg_extract_chords(const int* song_tokens, size_t frames, size_t song_vocab,
                              size_t vocal_vocab, size_t window, int* chords_out) {
  if (frames) {
    CSG_REQUIRE(song_tokens);
    CSG_REQUIRE(chords_out);
  }
  return guarded([&] {
    const csg::EmissionRule rule{song_vocab, vocal_vocab};
    rule.validate();
    const auto chords = csg::extract_chords_from_tokens(
        std::vector<int>(song_tokens, song_tokens + frames), rule,
        window ? window : csg::kDefaultMajorityWindow);
    std::copy(chords.begin(), chords.end(), chords_out);
  });
}

csg_status csg_feature_dim(size_t vocab, const char* extractor, size_t* dim) {
  CSG_REQUIRE(extractor);
  CSG_REQUIRE(dim);
  return guarded([&] {
    const auto kind = csg::parse_feature_extractor(extractor);
    *dim = kind == csg::FeatureExtractor::kHistogram ? vocab : vocab * vocab;
  });
}

csg_status csg_feature_stats(const int* tokens, const size_t* lengths, size_t sequences,
                             size_t vocab, const char* extractor, double* mean_out,
                             double* cov_out) {
  CSG_REQUIRE(tokens);
  CSG_REQUIRE(lengths);
  CSG_REQUIRE(extractor);
  CSG_REQUIRE(mean_out);
  CSG_REQUIRE(cov_out);
  return guarded([&] {
    std::vector<std::vector<int>> seqs;
    size_t offset = 0;
    for (size_t i = 0; i < sequences; ++i) {
      seqs.emplace_back(tokens + offset, tokens + offset + lengths[i]);
      offset += lengths[i];
    }
    const auto stats = csg::feature_stats(seqs, vocab, csg::parse_feature_extractor(extractor));
    const auto d = stats.mean.size();
    std::copy_n(stats.mean.data(), d, mean_out);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) cov_out[r * d + c] = stats.cov(r, c);
    }
  });
}

csg_status csg_frechet(const double* mean_a, const double* cov_a, const double* mean_b,
                       const double* cov_b, size_t dim, double* distance) {
  CSG_REQUIRE(mean_a);
  CSG_REQUIRE(cov_a);
  CSG_REQUIRE(mean_b);
  CSG_REQUIRE(cov_b);
  CSG_REQUIRE(distance);
  return guarded([&] {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto d = static_cast<Eigen::Index>(dim);
    csg::FeatureStats a{Eigen::Map<const Eigen::VectorXd>(mean_a, d),
                        Eigen::Map<const RowMajor>(cov_a, d, d)};
    csg::FeatureStats b{Eigen::Map<const Eigen::VectorXd>(mean_b, d),
                        Eigen::Map<const RowMajor>(cov_b, d, d)};
    *distance = csg::frechet_distance(a, b);
  });
}

// ---- configuration and data ----

csg_status csg_config_default(csg_config** out) {
  CSG_REQUIRE(out);
  return guarded([&] { *out = new csg_config{default_kv()}; });
}

csg_status csg_config_load(const char* path, csg_config** out) {
  CSG_REQUIRE(path);
  CSG_REQUIRE(out);
  return guarded([&] {
    auto kv = default_kv();
    const auto loaded = csg::KeyValueConfig::load(path);
    for (const auto& [k, v] : loaded.values()) kv.set(k, v);
    csg::RunConfig::from(kv);
    *out = new csg_config{std::move(kv)};
  });
}

csg_status csg_config_set(csg_config* config, const char* key, const char* value) {
  CSG_REQUIRE(config);
  CSG_REQUIRE(key);
  CSG_REQUIRE(value);
  return guarded([&] {
    auto kv = config->kv;
    kv.set(key, value);
    csg::RunConfig::from(kv);
    config->kv = std::move(kv);
  });
}

csg_status csg_config_format(const csg_config* config, char** text) {
  CSG_REQUIRE(config);
  CSG_REQUIRE(text);
  return guarded([&] { *text = dup_string(run_config(config).format()); });
}

void csg_config_free(csg_config* config) { delete config; }

csg_status csg_dataset_generate(const csg_config* config, csg_dataset** out) {
  CSG_REQUIRE(config);
  CSG_REQUIRE(out);
  return guarded([&] { *out = new csg_dataset{csg::generate_dataset(run_config(config).synth)}; });
}

csg_status csg_dataset_write(const csg_dataset* dataset, const char* train_path,
                             const char* eval_path) {
  CSG_REQUIRE(dataset);
  CSG_REQUIRE(train_path);
  CSG_REQUIRE(eval_path);
  return guarded([&] {
    csg::write_dataset(train_path, dataset->splits.train);
    csg::write_dataset(eval_path, dataset->splits.eval);
  });
}

csg_status csg_dataset_read(const char* train_path, const char* eval_path, csg_dataset** out) {
  CSG_REQUIRE(train_path);
  CSG_REQUIRE(eval_path);
  CSG_REQUIRE(out);
  return guarded([&] {
    *out = new csg_dataset{{csg::read_dataset(train_path), csg::read_dataset(eval_path)}};
  });
}

size_t csg_dataset_size(const csg_dataset* dataset, int eval_split) {
  if (!dataset) return 0;
  return (eval_split ? dataset->splits.eval : dataset->splits.train).examples.size();
}

void csg_dataset_free(csg_dataset* dataset) { delete dataset; }

// ---- model ----

csg_status csg_train(const csg_config* config, const csg_dataset* dataset,
                     csg_progress_fn progress, void* user, csg_model** model, double* final_loss,
                     double* final_sim, char** curve_csv) {
  CSG_REQUIRE(config);
  CSG_REQUIRE(dataset);
  CSG_REQUIRE(model);
  return guarded([&] {
    const auto rc = run_config(config);
    csg::ProgressFn fn;
    if (progress) {
      fn = [&](const csg::CurvePoint& p) { progress(p.step, p.loss, p.lr, p.sim, user); };
    }
    auto result = csg::train(rc.model, rc.train, dataset->splits, fn);
    char* curve = curve_csv ? dup_string(csg::format_curve(result.curve)) : nullptr;
    *model = new csg_model{std::move(result.model)};
    if (final_loss) *final_loss = result.final_loss;
    if (final_sim) *final_sim = result.final_sim;
    if (curve_csv) *curve_csv = curve;
  });
}

csg_status csg_model_create(const csg_config* config, uint64_t seed, csg_model** out) {
  CSG_REQUIRE(config);
  CSG_REQUIRE(out);
  return guarded([&] { *out = new csg_model{csg::Model<float>(run_config(config).model, seed)}; });
}

csg_status csg_model_save(const csg_model* model, const char* path) {
  CSG_REQUIRE(model);
  CSG_REQUIRE(path);
  return guarded([&] { csg::save_checkpoint(model->model, path); });
}

csg_status csg_model_load(const char* path, csg_model** out) {
  CSG_REQUIRE(path);
  CSG_REQUIRE(out);
  return guarded([&] { *out = new csg_model{csg::load_checkpoint<float>(path)}; });
}

csg_status csg_model_config(const csg_model* model, char** text) {
  CSG_REQUIRE(model);
  CSG_REQUIRE(text);
  return guarded([&] {
    csg::KeyValueConfig kv;
    model->model.config().write_to(kv);
    *text = dup_string(kv.format());
  });
}

size_t csg_model_max_frames(const csg_model* model) {
  return model ? model->model.config().max_frames : 0;
}

size_t csg_model_vocab(const csg_model* model, const char* stream) {
  if (!model || !stream) return 0;
  const auto& c = model->model.config();
  const std::string s = stream;
  if (s == "chord") return c.chord_vocab;
  if (s == "lyric") return c.lyric_vocab;
  if (s == "vocal") return c.vocal_vocab;
  if (s == "song") return c.song_vocab;
  return 0;
}

void csg_model_free(csg_model* model) { delete model; }

csg_status csg_generate(const csg_model* model, const int* chords, const int* lyrics,
                        size_t frames, const char* sampler, uint64_t seed, int* vocal_out,
                        int* song_out) {
  CSG_REQUIRE(model);
  CSG_REQUIRE(chords);
  CSG_REQUIRE(lyrics);
  CSG_REQUIRE(sampler);
  CSG_REQUIRE(vocal_out);
  CSG_REQUIRE(song_out);
  return guarded([&] {
    const auto gen = model->model.generate(std::vector<int>(chords, chords + frames),
                                           std::vector<int>(lyrics, lyrics + frames),
                                           csg::Sampler::parse(sampler), seed);
    std::copy(gen.vocal.begin(), gen.vocal.end(), vocal_out);
    std::copy(gen.song.begin(), gen.song.end(), song_out);
  });
}

csg_status csg_evaluate(const csg_model* model, const csg_dataset* dataset, size_t max_examples,
                        double* sim) {
  CSG_REQUIRE(model);
  CSG_REQUIRE(dataset);
  CSG_REQUIRE(sim);
  return guarded([&] { *sim = csg::evaluate_sim(model->model, dataset->splits.eval, max_examples); });
}

// ---- ablation ----

csg_status csg_ablate(const csg_config* config, const char* modes, const uint64_t* seeds,
                      size_t seed_count, csg_ablation_fn progress, void* user,
                      csg_ablation** out) {
  CSG_REQUIRE(config);
  CSG_REQUIRE(modes);
  CSG_REQUIRE(seeds);
  CSG_REQUIRE(out);
  return guarded([&] {
    csg::AblationProgressFn fn;
    if (progress) {
      fn = [&](const csg::AblationRow& r) {
        progress(std::string(csg::fusion_mode_name(r.mode)).c_str(), r.seed, r.sim, r.final_loss,
                 user);
      };
    }
    *out = new csg_ablation{csg::run_ablation(run_config(config), parse_modes(modes),
                                              std::vector<std::uint64_t>(seeds, seeds + seed_count),
                                              fn)};
  });
}

csg_status csg_ablation_table(const csg_ablation* ablation, char** csv) {
  CSG_REQUIRE(ablation);
  CSG_REQUIRE(csv);
  return guarded([&] { *csv = dup_string(csg::format_ablation_table(ablation->result)); });
}

csg_status csg_ablation_summary(const csg_ablation* ablation, char** csv) {
  CSG_REQUIRE(ablation);
  CSG_REQUIRE(csv);
  return guarded([&] { *csv = dup_string(csg::format_ablation_summary(ablation->result)); });
}

size_t csg_ablation_runs(const csg_ablation* ablation) {
  return ablation ? ablation->result.rows.size() : 0;
}

csg_status csg_ablation_curve(const csg_ablation* ablation, size_t run, char** mode,
                              uint64_t* seed, char** curve_csv) {
  CSG_REQUIRE(ablation);
  return guarded([&] {
    if (run >= ablation->result.rows.size()) {
      throw csg::IndexError("ablation run " + std::to_string(run) + " out of range");
    }
    const auto& row = ablation->result.rows[run];
    char* m = mode ? dup_string(std::string(csg::fusion_mode_name(row.mode))) : nullptr;
    char* c = nullptr;
    try {
      c = curve_csv ? dup_string(csg::format_curve(row.curve)) : nullptr;
    } catch (...) {
      std::free(m);
      throw;
    }
    if (mode) *mode = m;
    if (seed) *seed = row.seed;
    if (curve_csv) *curve_csv = c;
  });
}

csg_status csg_ablation_mean_sim(const csg_ablation* ablation, const char* mode,
                                 double* mean_sim) {
  CSG_REQUIRE(ablation);
  CSG_REQUIRE(mode);
  CSG_REQUIRE(mean_sim);
  return guarded([&] {
    *mean_sim = ablation->result.summary(csg::parse_fusion_mode(mode)).mean_sim;
  });
}

void csg_ablation_free(csg_ablation* ablation) { delete ablation; }

csg_status csg_write_text(const char* path, const char* text) {
  CSG_REQUIRE(path);
  CSG_REQUIRE(text);
  return guarded([&] { csg::write_file_atomic(path, text); });
}

}  // extern "C"
