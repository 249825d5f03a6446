/* Copyright 2026 The CSG Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the chord-conditioned song generator.
 *
 * Every fallible call returns a csg_status. On failure the calling thread's
 * message is available from csg_last_error() until its next failing call.
 * Objects are opaque handles released with their matching *_free function;
 * strings returned through char** are released with csg_string_free. */

#ifndef CSG_CSG_H_
#define CSG_CSG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(CSG_BUILDING_LIBRARY)
#define CSG_API __attribute__((visibility("default")))
#else
#define CSG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum csg_status {
  CSG_OK = 0,
  CSG_ERR_ARGUMENT = 1, /* null handle or out-pointer */
  CSG_ERR_SHAPE = 2,
  CSG_ERR_INDEX = 3,
  CSG_ERR_PARSE = 4,
  CSG_ERR_VALIDATION = 5,
  CSG_ERR_CONTRACT = 6,
  CSG_ERR_IO = 7,
  CSG_ERR_CAPACITY = 8,
  CSG_ERR_NUMERIC = 9,
  CSG_ERR_INTERNAL = 10
} csg_status;

enum { CSG_NUM_CHORD_TOKENS = 48, CSG_NO_CHORD = 48, CSG_NUM_SHIFTS = 12 };

CSG_API const char* csg_version(void);
CSG_API const char* csg_last_error(void);
CSG_API const char* csg_status_name(csg_status status);
CSG_API void csg_string_free(char* s);

/* ---- chord codec ---- */

typedef struct csg_frames csg_frames;

CSG_API csg_status csg_frames_create(const int* tokens, size_t count, double frame_rate_hz,
                                     csg_frames** out);
CSG_API csg_status csg_frames_read(const char* path, csg_frames** out);
CSG_API csg_status csg_frames_write(const csg_frames* frames, const char* path);
CSG_API size_t csg_frames_length(const csg_frames* frames);
CSG_API const int* csg_frames_tokens(const csg_frames* frames);
CSG_API double csg_frames_rate(const csg_frames* frames);
CSG_API void csg_frames_free(csg_frames* frames);

/* "N" parses to CSG_NO_CHORD. */
CSG_API csg_status csg_chord_parse(const char* label, int* token);
CSG_API csg_status csg_chord_name(int token, char** name);

/* Space-separated chord names for scale degrees 1-7 of the key. */
CSG_API csg_status csg_progression(const char* key, const char* mode, const char* digits,
                                   char** names);
CSG_API csg_status csg_progression_frames(const char* key, const char* mode, const char* digits,
                                          size_t frames_per_chord, size_t total_frames,
                                          double frame_rate_hz, csg_frames** out);

/* duration_seconds <= 0 uses the end of the last interval. */
CSG_API csg_status csg_quantize_lab(const char* lab_path, double frame_rate_hz,
                                    double duration_seconds, csg_frames** out);
CSG_API csg_status csg_transpose(const csg_frames* frames, int semitones, csg_frames** out);

/* ---- metrics ---- */

typedef struct csg_sim_report {
  int best_shift;
  double sim;
  double per_shift_accuracy[CSG_NUM_SHIFTS];
} csg_sim_report;

CSG_API csg_status csg_sim(const csg_frames* predicted, const csg_frames* target,
                           csg_sim_report* report);
CSG_API csg_status csg_sim_report_format(const csg_sim_report* report, char** text);

/* Recovers a chord stream from song tokens under the synthetic emission
 * rule; window 0 selects the default majority-filter width. */
CSG_API csg_status csg_extract_chords(const int* song_tokens, size_t frames, size_t song_vocab,
                                      size_t vocal_vocab, size_t window, int* chords_out);

/* extractor: "histogram" (dim = vocab) or "bigram" (dim = vocab^2). */
CSG_API csg_status csg_feature_dim(size_t vocab, const char* extractor, size_t* dim);
/* Sequences are concatenated in `tokens` with per-sequence `lengths`.
 * mean_out holds dim values, cov_out dim*dim row-major. */
CSG_API csg_status csg_feature_stats(const int* tokens, const size_t* lengths,
                                     size_t sequences, size_t vocab, const char* extractor,
                                     double* mean_out, double* cov_out);
CSG_API csg_status csg_frechet(const double* mean_a, const double* cov_a, const double* mean_b,
                               const double* cov_b, size_t dim, double* distance);

/* ---- configuration and data ---- */

typedef struct csg_config csg_config;

CSG_API csg_status csg_config_default(csg_config** out);
CSG_API csg_status csg_config_load(const char* path, csg_config** out);
/* Keys: model.<field>, train.<field>, synth.<field>. */
CSG_API csg_status csg_config_set(csg_config* config, const char* key, const char* value);
CSG_API csg_status csg_config_format(const csg_config* config, char** text);
CSG_API void csg_config_free(csg_config* config);

typedef struct csg_dataset csg_dataset;

CSG_API csg_status csg_dataset_generate(const csg_config* config, csg_dataset** out);
CSG_API csg_status csg_dataset_write(const csg_dataset* dataset, const char* train_path,
                                     const char* eval_path);
CSG_API csg_status csg_dataset_read(const char* train_path, const char* eval_path,
                                    csg_dataset** out);
CSG_API size_t csg_dataset_size(const csg_dataset* dataset, int eval_split);
CSG_API void csg_dataset_free(csg_dataset* dataset);

/* ---- model ---- */

typedef struct csg_model csg_model;

/* sim < 0 when no evaluation ran at this step. */
typedef void (*csg_progress_fn)(size_t step, double loss, double lr, double sim, void* user);

/* curve_csv (optional) receives "step,loss,sim" rows. */
CSG_API csg_status csg_train(const csg_config* config, const csg_dataset* dataset,
                             csg_progress_fn progress, void* user, csg_model** model,
                             double* final_loss, double* final_sim, char** curve_csv);
CSG_API csg_status csg_model_create(const csg_config* config, uint64_t seed, csg_model** out);
CSG_API csg_status csg_model_save(const csg_model* model, const char* path);
CSG_API csg_status csg_model_load(const char* path, csg_model** out);
CSG_API csg_status csg_model_config(const csg_model* model, char** text);
CSG_API size_t csg_model_max_frames(const csg_model* model);
CSG_API size_t csg_model_vocab(const csg_model* model, const char* stream);
CSG_API void csg_model_free(csg_model* model);

/* sampler: "greedy", "topk:<k>" or "temp:<tau>". Outputs hold `frames`. */
CSG_API csg_status csg_generate(const csg_model* model, const int* chords, const int* lyrics,
                                size_t frames, const char* sampler, uint64_t seed,
                                int* vocal_out, int* song_out);

/* Mean eval-split SIM of greedy generations on clean chords. */
CSG_API csg_status csg_evaluate(const csg_model* model, const csg_dataset* dataset,
                                size_t max_examples, double* sim);

/* ---- ablation ---- */

typedef struct csg_ablation csg_ablation;

typedef void (*csg_ablation_fn)(const char* mode, uint64_t seed, double sim, double final_loss,
                                void* user);

/* modes: comma-separated subset of dws,concat,xattn,none. */
CSG_API csg_status csg_ablate(const csg_config* config, const char* modes,
                              const uint64_t* seeds, size_t seed_count,
                              csg_ablation_fn progress, void* user, csg_ablation** out);
CSG_API csg_status csg_ablation_table(const csg_ablation* ablation, char** csv);
CSG_API csg_status csg_ablation_summary(const csg_ablation* ablation, char** csv);
CSG_API size_t csg_ablation_runs(const csg_ablation* ablation);
CSG_API csg_status csg_ablation_curve(const csg_ablation* ablation, size_t run, char** mode,
                                      uint64_t* seed, char** curve_csv);
CSG_API csg_status csg_ablation_mean_sim(const csg_ablation* ablation, const char* mode,
                                         double* mean_sim);
CSG_API void csg_ablation_free(csg_ablation* ablation);

/* ---- files ---- */

/* Writes via a temporary file and rename. */
CSG_API csg_status csg_write_text(const char* path, const char* text);

#ifdef __cplusplus
}
#endif

#endif /* CSG_CSG_H_ */
