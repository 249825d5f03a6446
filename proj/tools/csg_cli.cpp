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

// Command-line front end. Talks to the library only through csg/csg.h.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csg/csg.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(csg_status status) {
  if (status != CSG_OK) {
    throw DataError(std::string(csg_status_name(status)) + ": " + csg_last_error());
  }
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Frames = std::unique_ptr<csg_frames, Deleter<csg_frames, csg_frames_free>>;
using Config = std::unique_ptr<csg_config, Deleter<csg_config, csg_config_free>>;
using DatasetPtr = std::unique_ptr<csg_dataset, Deleter<csg_dataset, csg_dataset_free>>;
using ModelPtr = std::unique_ptr<csg_model, Deleter<csg_model, csg_model_free>>;
using Ablation = std::unique_ptr<csg_ablation, Deleter<csg_ablation, csg_ablation_free>>;

std::string take_string(char* s) {
  std::string out = s ? s : "";
  csg_string_free(s);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  check(csg_write_text(path.string().c_str(), text.c_str()));
}

std::vector<int> read_tokens(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<int> out;
  std::string word;
  while (in >> word) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(word, &used));
      if (used != word.size()) throw std::invalid_argument(word);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": bad token '" + word + "'");
    }
  }
  return out;
}

std::vector<std::vector<int>> read_token_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<int>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<int> seq;
    int v;
    while (ls >> v) seq.push_back(v);
    if (!ls.eof()) throw DataError(path.string() + ": bad token line '" + line + "'");
    out.push_back(std::move(seq));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s + "\n";
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  csg_config* raw = nullptr;
  check(path.empty() ? csg_config_default(&raw) : csg_config_load(path.c_str(), &raw));
  Config config(raw);
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("--set expects key=value, got '" + item + "'");
    check(csg_config_set(config.get(), item.substr(0, eq).c_str(), item.substr(eq + 1).c_str()));
  }
  return config;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_manifest(const fs::path& dir, const std::string& command, const csg_config* config,
                    const std::vector<std::string>& outputs, double seconds) {
  std::ostringstream os;
  os << "command=" << command << "\nversion=" << csg_version() << "\nfinished=" << timestamp()
     << "\nseconds=" << seconds << '\n';
  for (const auto& o : outputs) os << "output=" << o << '\n';
  os << take_string([&] {
    char* text = nullptr;
    check(csg_config_format(config, &text));
    return text;
  }());
  write_text(dir / "manifest.txt", os.str());
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// KEY:MODE:DIGITS, a .lab file, or a .seq file.
Frames load_chords(const std::string& spec, std::size_t frames, std::size_t frames_per_chord) {
  csg_frames* raw = nullptr;
  const fs::path path(spec);
  if (path.extension() == ".lab") {
    check(csg_quantize_lab(spec.c_str(), 50.0, 0.0, &raw));
  } else if (path.extension() == ".seq") {
    check(csg_frames_read(spec.c_str(), &raw));
  } else {
    const auto a = spec.find(':');
    const auto b = spec.find(':', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) {
      throw DataError("--chords expects KEY:MODE:DIGITS, a .lab file or a .seq file");
    }
    check(csg_progression_frames(spec.substr(0, a).c_str(), spec.substr(a + 1, b - a - 1).c_str(),
                                 spec.substr(b + 1).c_str(), frames_per_chord, frames, 50.0, &raw));
  }
  return Frames(raw);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chord-conditioned song generator"};
  app.set_version_flag("--version", std::string(csg_version()));
  app.require_subcommand(1);

  // chord ...
  auto* chord = app.add_subcommand("chord", "Chord token utilities");
  chord->require_subcommand(1);

  std::vector<std::string> labels;
  auto* c_parse = chord->add_subcommand("parse", "Map chord labels to token ids");
  c_parse->add_option("labels", labels, "Labels such as C:maj, Bb:min, N")->required();

  std::string key = "C", mode = "major", digits;
  auto* c_prog = chord->add_subcommand("progression", "Chords for scale-degree digits 1-7");
  c_prog->add_option("--key", key, "Key root");
  c_prog->add_option("--mode", mode, "major or minor");
  c_prog->add_option("digits", digits, "Degrees, e.g. 6451")->required();

  std::string lab_in, out_path;
  double rate = 50.0, duration = 0.0;
  auto* c_quant = chord->add_subcommand("quantize", "Quantize a .lab file to frames");
  c_quant->add_option("input", lab_in, "Label file (start end label)")->required();
  c_quant->add_option("--rate", rate, "Frame rate in Hz");
  c_quant->add_option("--duration", duration, "Total seconds (default: last interval end)");
  c_quant->add_option("-o,--out", out_path, "Output frame sequence")->required();

  std::string seq_in;
  int semitones = 0;
  auto* c_trans = chord->add_subcommand("transpose", "Shift every chord root");
  c_trans->add_option("input", seq_in, "Frame sequence file")->required();
  c_trans->add_option("--semitones", semitones, "Shift in semitones")->required();
  c_trans->add_option("-o,--out", out_path, "Output frame sequence")->required();

  std::string sim_a, sim_b;
  auto* c_sim = chord->add_subcommand("sim", "Key-shift SIM between two frame sequences");
  c_sim->add_option("predicted", sim_a)->required();
  c_sim->add_option("target", sim_b)->required();

  // shared run options
  std::string config_path, out_dir, data_dir;
  std::vector<std::string> overrides;
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value run configuration");
    cmd->add_option("--set", overrides, "Override one config key (key=value)");
    cmd->add_option("-o,--out", out_dir, "Output directory")->required();
  };

  auto* synth = app.add_subcommand("synth", "Write synthetic train/eval datasets");
  add_run_options(synth);

  std::string fusion_mode;
  long long seed = -1;
  auto* train = app.add_subcommand("train", "Train a model");
  add_run_options(train);
  train->add_option("--mode", fusion_mode, "dws, concat, xattn or none");
  train->add_option("--seed", seed, "Seed for data, initialization and batching");
  train->add_option("--data", data_dir, "Dataset directory from `synth` (default: generate)");

  std::string ckpt, chords_spec, lyrics_path, sampler = "greedy";
  std::size_t frames = 0, frames_per_chord = 32;
  unsigned long long gen_seed = 0;
  auto* generate = app.add_subcommand("generate", "Generate vocal and song tokens");
  generate->add_option("checkpoint", ckpt)->required();
  generate->add_option("--chords", chords_spec, "KEY:MODE:DIGITS, .lab or .seq")->required();
  generate->add_option("--lyrics", lyrics_path, "Lyric token file, one token per frame")
      ->required();
  generate->add_option("--sampler", sampler, "greedy, topk:<k> or temp:<tau>");
  generate->add_option("--seed", gen_seed, "Sampling seed");
  generate->add_option("--frames", frames, "Frames for a progression (default: lyric length)");
  generate->add_option("--frames-per-chord", frames_per_chord, "Progression chord length");
  generate->add_option("-o,--out", out_dir, "Output directory")->required();

  double noise = 0.33;
  std::size_t n_seeds = 5;
  std::string modes = "dws,concat,xattn,none";
  auto* ablate = app.add_subcommand("ablate", "Compare fusion modes across seeds");
  add_run_options(ablate);
  ablate->add_option("--noise", noise, "Chord label noise rate");
  ablate->add_option("--seeds", n_seeds, "Seeds 1..N");
  ablate->add_option("--modes", modes, "Comma-separated fusion modes");

  std::string fa, fb, extractor = "histogram";
  std::size_t vocab = 32;
  auto* frechet = app.add_subcommand("frechet", "Fréchet distance between two token sets");
  frechet->add_option("a", fa, "Token file, one sequence per line")->required();
  frechet->add_option("b", fb, "Token file, one sequence per line")->required();
  frechet->add_option("--vocab", vocab, "Token vocabulary size");
  frechet->add_option("--extractor", extractor, "histogram or bigram");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const auto start = std::chrono::steady_clock::now();
    if (*c_parse) {
      for (const auto& label : labels) {
        int token = 0;
        check(csg_chord_parse(label.c_str(), &token));
        char* name = nullptr;
        check(csg_chord_name(token, &name));
        std::cout << token << ' ' << take_string(name) << '\n';
      }
    } else if (*c_prog) {
      char* names = nullptr;
      check(csg_progression(key.c_str(), mode.c_str(), digits.c_str(), &names));
      std::cout << take_string(names) << '\n';
    } else if (*c_quant) {
      csg_frames* raw = nullptr;
      check(csg_quantize_lab(lab_in.c_str(), rate, duration, &raw));
      Frames f(raw);
      check(csg_frames_write(f.get(), out_path.c_str()));
    } else if (*c_trans) {
      csg_frames* raw = nullptr;
      check(csg_frames_read(seq_in.c_str(), &raw));
      Frames in(raw);
      check(csg_transpose(in.get(), semitones, &raw));
      Frames f(raw);
      check(csg_frames_write(f.get(), out_path.c_str()));
    } else if (*c_sim) {
      csg_frames *pa = nullptr, *pb = nullptr;
      check(csg_frames_read(sim_a.c_str(), &pa));
      Frames a(pa);
      check(csg_frames_read(sim_b.c_str(), &pb));
      Frames b(pb);
      csg_sim_report report;
      check(csg_sim(a.get(), b.get(), &report));
      char* text = nullptr;
      check(csg_sim_report_format(&report, &text));
      std::cout << take_string(text);
    } else if (*synth) {
      auto config = load_config(config_path, overrides);
      csg_dataset* raw = nullptr;
      check(csg_dataset_generate(config.get(), &raw));
      DatasetPtr ds(raw);
      const fs::path dir(out_dir);
      check(csg_dataset_write(ds.get(), (dir / "train.dataset").string().c_str(),
                              (dir / "eval.dataset").string().c_str()));
      write_manifest(dir, "synth", config.get(), {"train.dataset", "eval.dataset"},
                     seconds_since(start));
      std::cout << "train=" << csg_dataset_size(ds.get(), 0)
                << " eval=" << csg_dataset_size(ds.get(), 1) << '\n';
    } else if (*train) {
      if (!fusion_mode.empty()) overrides.push_back("model.mode=" + fusion_mode);
      if (seed >= 0) {
        overrides.push_back("train.seed=" + std::to_string(seed));
        overrides.push_back("synth.seed=" + std::to_string(seed));
      }
      auto config = load_config(config_path, overrides);
      csg_dataset* raw = nullptr;
      if (data_dir.empty()) {
        check(csg_dataset_generate(config.get(), &raw));
      } else {
        check(csg_dataset_read((fs::path(data_dir) / "train.dataset").string().c_str(),
                               (fs::path(data_dir) / "eval.dataset").string().c_str(), &raw));
      }
      DatasetPtr ds(raw);
      csg_model* model_raw = nullptr;
      double loss = 0, sim = 0;
      char* curve = nullptr;
      auto progress = [](size_t step, double l, double lr, double s, void*) {
        if (step % 50 == 0 || s >= 0) {
          std::fprintf(stderr, "step %zu loss %.4f lr %.2e", step, l, lr);
          if (s >= 0) std::fprintf(stderr, " sim %.4f", s);
          std::fprintf(stderr, "\n");
        }
      };
      check(csg_train(config.get(), ds.get(), progress, nullptr, &model_raw, &loss, &sim, &curve));
      ModelPtr model(model_raw);
      const fs::path dir(out_dir);
      write_text(dir / "curve.csv", take_string(curve));
      check(csg_model_save(model.get(), (dir / "model.ckpt").string().c_str()));
      write_manifest(dir, "train", config.get(), {"model.ckpt", "curve.csv"},
                     seconds_since(start));
      std::cout << "final_loss=" << loss << "\nsim=" << sim << '\n';
    } else if (*generate) {
      csg_model* raw = nullptr;
      check(csg_model_load(ckpt.c_str(), &raw));
      ModelPtr model(raw);
      const auto lyrics = read_tokens(lyrics_path);
      const auto chords = load_chords(chords_spec, frames ? frames : lyrics.size(),
                                      frames_per_chord);
      const std::size_t n = csg_frames_length(chords.get());
      if (lyrics.size() != n) {
        throw DataError("lyrics have " + std::to_string(lyrics.size()) + " frames, chords " +
                        std::to_string(n));
      }
      std::vector<int> vocal(n), song(n), extracted(n);
      check(csg_generate(model.get(), csg_frames_tokens(chords.get()), lyrics.data(), n,
                         sampler.c_str(), gen_seed, vocal.data(), song.data()));
      check(csg_extract_chords(song.data(), n, csg_model_vocab(model.get(), "song"),
                               csg_model_vocab(model.get(), "vocal"), 0, extracted.data()));
      csg_frames* ex_raw = nullptr;
      check(csg_frames_create(extracted.data(), n, csg_frames_rate(chords.get()), &ex_raw));
      Frames ex(ex_raw);
      csg_sim_report report;
      check(csg_sim(ex.get(), chords.get(), &report));
      char* text = nullptr;
      check(csg_sim_report_format(&report, &text));
      const std::string report_text = take_string(text);
      const fs::path dir(out_dir);
      write_text(dir / "vocal.txt", join(vocal));
      write_text(dir / "song.txt", join(song));
      check(csg_frames_write(ex.get(), (dir / "extracted.seq").string().c_str()));
      check(csg_frames_write(chords.get(), (dir / "requested.seq").string().c_str()));
      write_text(dir / "sim.txt", report_text);
      std::cout << report_text;
    } else if (*ablate) {
      std::ostringstream noise_text;
      noise_text.precision(17);
      noise_text << noise;
      overrides.push_back("synth.noise_rate=" + noise_text.str());
      auto config = load_config(config_path, overrides);
      std::vector<uint64_t> seeds;
      for (std::size_t s = 1; s <= n_seeds; ++s) seeds.push_back(s);
      auto progress = [](const char* m, uint64_t s, double sim, double loss, void*) {
        std::fprintf(stderr, "%s seed %llu sim %.4f loss %.4f\n", m,
                     static_cast<unsigned long long>(s), sim, loss);
      };
      csg_ablation* raw = nullptr;
      check(csg_ablate(config.get(), modes.c_str(), seeds.data(), seeds.size(), progress, nullptr,
                       &raw));
      Ablation result(raw);
      const fs::path dir(out_dir);
      char* table = nullptr;
      check(csg_ablation_table(result.get(), &table));
      write_text(dir / "table.csv", take_string(table));
      char* summary = nullptr;
      check(csg_ablation_summary(result.get(), &summary));
      const std::string summary_text = take_string(summary);
      write_text(dir / "summary.csv", summary_text);
      std::vector<std::string> outputs{"table.csv", "summary.csv"};
      for (std::size_t i = 0; i < csg_ablation_runs(result.get()); ++i) {
        char *m = nullptr, *curve = nullptr;
        uint64_t s = 0;
        check(csg_ablation_curve(result.get(), i, &m, &s, &curve));
        const std::string name = "curves/" + take_string(m) + "_seed" + std::to_string(s) + ".csv";
        write_text(dir / name, take_string(curve));
        outputs.push_back(name);
      }
      write_manifest(dir, "ablate", config.get(), outputs, seconds_since(start));
      std::cout << summary_text;
    } else if (*frechet) {
      size_t dim = 0;
      check(csg_feature_dim(vocab, extractor.c_str(), &dim));
      auto stats = [&](const std::string& path, std::vector<double>& mean,
                       std::vector<double>& cov) {
        const auto seqs = read_token_lines(path);
        std::vector<int> flat;
        std::vector<size_t> lengths;
        for (const auto& s : seqs) {
          flat.insert(flat.end(), s.begin(), s.end());
          lengths.push_back(s.size());
        }
        mean.assign(dim, 0.0);
        cov.assign(dim * dim, 0.0);
        check(csg_feature_stats(flat.data(), lengths.data(), lengths.size(), vocab,
                                extractor.c_str(), mean.data(), cov.data()));
      };
      std::vector<double> ma, ca, mb, cb;
      stats(fa, ma, ca);
      stats(fb, mb, cb);
      double d = 0;
      check(csg_frechet(ma.data(), ca.data(), mb.data(), cb.data(), dim, &d));
      std::cout.precision(17);
      std::cout << "frechet=" << d << '\n';
    }
  } catch (const DataError& e) {
    std::cerr << "csg: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
