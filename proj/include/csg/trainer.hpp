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

#ifndef CSG_TRAINER_HPP_
#define CSG_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csg/fusion.hpp"
#include "csg/io.hpp"
#include "csg/model.hpp"
#include "csg/parameters.hpp"
#include "csg/synth.hpp"

namespace csg {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double lr_target = 1e-3;
  std::size_t warmup_steps = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global norm; 0 disables
  // Probability that a training example hides its song history.
  double history_dropout = 0.0;
  std::size_t eval_every = 500;  // 0: evaluate only at the end
  std::size_t eval_examples = 32;  // cap on eval split examples scored
  std::uint64_t seed = 1;

  void validate() const;
  // Keys are the field names prefixed with `train.`.
  void write_to(KeyValueConfig& kv) const;
  static TrainConfig from(const KeyValueConfig& kv);
};

// lr_target * min(1, step / warmup_steps)
double learning_rate(const TrainConfig& config, std::size_t step);

template <typename T>
class Adam {
 public:
  Adam(ParameterStore<T>& store, double beta1, double beta2, double eps);

  // Applies one update from the accumulated gradients.
  void step(double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  ParameterStore<T>& store_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales gradients in place so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParameterStore<T>& store, double max_norm);

struct CurvePoint {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double sim = -1.0;  // negative where no evaluation ran
};

struct TrainResult {
  Model<float> model;
  std::vector<CurvePoint> curve;
  double final_loss = 0.0;
  double final_sim = 0.0;
};

using ProgressFn = std::function<void(const CurvePoint&)>;

// Greedy generation on clean chords, chords recovered from the song
// stream, averaged SIM against the clean schedule.
double evaluate_sim(const Model<float>& model, const Dataset& eval, std::size_t max_examples,
                    std::size_t batch_size = 8);

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const DatasetSplits& data, const ProgressFn& progress = {});

// Model, trainer and synth settings in one key=value file. Model keys carry
// a `model.` prefix.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;

  void validate() const;
  std::string format() const;
  static RunConfig from(const KeyValueConfig& kv);
  static RunConfig load(const std::filesystem::path& path);
};

struct AblationRow {
  FusionMode mode = FusionMode::kDws;
  std::uint64_t seed = 0;
  double sim = 0.0;
  double final_loss = 0.0;
  std::vector<CurvePoint> curve;
};

struct AblationSummary {
  FusionMode mode = FusionMode::kDws;
  double mean_sim = 0.0;
  double std_sim = 0.0;  // sample standard deviation
  double mean_loss = 0.0;
  std::size_t runs = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summaries;

  const AblationSummary& summary(FusionMode mode) const;
};

using AblationProgressFn = std::function<void(const AblationRow&)>;

// Every (mode, seed) pair trains under identical budgets; one dataset per
// seed is shared by all modes. The seed drives data, initialization and
// batching.
AblationResult run_ablation(const RunConfig& base, const std::vector<FusionMode>& modes,
                            const std::vector<std::uint64_t>& seeds,
                            const AblationProgressFn& progress = {});

// mode,seed,sim,final_loss
std::string format_ablation_table(const AblationResult& result);
// mode,runs,mean_sim,std_sim,mean_loss
std::string format_ablation_summary(const AblationResult& result);
// step,loss,sim (sim left empty where not evaluated)
std::string format_curve(const std::vector<CurvePoint>& curve);

}  // namespace csg

#endif  // CSG_TRAINER_HPP_
