// tools/acx_main.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "acx/encoder.hpp"
#include "acx/errors.hpp"
#include "acx/evalsim.hpp"
#include "acx/gradcheck.hpp"
#include "acx/head.hpp"
#include "acx/parallel.hpp"
#include "acx/quadruplet.hpp"
#include "acx/scenario.hpp"
#include "acx/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitConfigError = 2;

struct AppConfig {
  std::uint64_t seed = 1;
  int jobs = 0;
  std::string out = "out";

  int sample_rate_hz = 16000;
  int pool_utterances = 16;
  double pool_duration_s = 1.0;
  int synth_noises = 4;
  int synth_rirs_per_room = 3;

  acx::EncoderConfig encoder;
  int head_hidden = 256;
  int head_dim_out = 128;
  bool head_normalize = true;

  int synth_per_subset = 4;
  int quad_count = 64;
  std::string quads_path;

  int train_steps = 500;
  int train_batch = 8;
  double train_lr = 1e-3;
  int checkpoint_every = 0;
  std::string resume_path;

  std::string checkpoint_path;  // eval: optional trained head
  int eval_n_per_point = 4;
};

void apply_json(AppConfig& cfg, const json& j) {
  auto num = [&j](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).template get<std::decay_t<decltype(slot)>>();
  };
  num("seed", cfg.seed);
  num("jobs", cfg.jobs);
  num("out", cfg.out);
  num("sample_rate_hz", cfg.sample_rate_hz);
  num("pool_utterances", cfg.pool_utterances);
  num("pool_duration_s", cfg.pool_duration_s);
  num("synth_noises", cfg.synth_noises);
  num("synth_rirs_per_room", cfg.synth_rirs_per_room);
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    if (e.contains("dim")) cfg.encoder.dim = e.at("dim").get<int>();
    if (e.contains("num_mel_bands"))
      cfg.encoder.num_mel_bands = e.at("num_mel_bands").get<int>();
    if (e.contains("seed")) cfg.encoder.seed = e.at("seed").get<std::uint64_t>();
  }
  num("head_hidden", cfg.head_hidden);
  num("head_dim_out", cfg.head_dim_out);
  num("head_normalize", cfg.head_normalize);
  num("synth_per_subset", cfg.synth_per_subset);
  num("quad_count", cfg.quad_count);
  num("quads_path", cfg.quads_path);
  num("train_steps", cfg.train_steps);
  num("train_batch", cfg.train_batch);
  num("train_lr", cfg.train_lr);
  num("checkpoint_every", cfg.checkpoint_every);
  num("resume_path", cfg.resume_path);
  num("checkpoint_path", cfg.checkpoint_path);
  num("eval_n_per_point", cfg.eval_n_per_point);
}

struct World {
  acx::UtterancePool pool;
  acx::AssetResolver assets;
  acx::MelStatEncoder encoder;
};

World make_world(const AppConfig& cfg) {
  acx::EncoderConfig ec = cfg.encoder;
  ec.sample_rate_hz = cfg.sample_rate_hz;
  return World{
      acx::UtterancePool(cfg.seed, cfg.pool_utterances, cfg.pool_duration_s,
                         cfg.sample_rate_hz),
      acx::AssetResolver(cfg.sample_rate_hz, cfg.synth_noises,
                         cfg.synth_rirs_per_room),
      acx::MelStatEncoder(ec)};
}

std::string default_quads_path(const AppConfig& cfg) {
  return cfg.quads_path.empty() ? (fs::path(cfg.out) / "quadruplets.jsonl").string()
                                : cfg.quads_path;
}

acx::AcxHeadConfig head_config(const AppConfig& cfg) {
  return acx::AcxHeadConfig{cfg.encoder.dim, cfg.head_hidden, cfg.head_dim_out,
                            cfg.head_normalize};
}

int cmd_synth(const AppConfig& cfg) {
  World w = make_world(cfg);
  fs::create_directories(cfg.out);
  std::vector<acx::CorpusManifest> subsets =
      acx::build_subsets(w.pool, w.assets, cfg.seed, cfg.synth_per_subset);
  int bad = 0;
  for (acx::CorpusManifest& m : subsets) {
    fs::path dir = fs::path(cfg.out) / m.name;
    acx::materialize_manifest(m, w.pool, w.assets, dir.string());
    acx::write_manifest_jsonl(m, (dir / "manifest.jsonl").string());
    double worst_snr_dev = 0.0;
    for (const acx::ManifestEntry& e : m.entries) {
      if (e.spec.snr_db && e.measured.measured_snr_db) {
        double dev = std::abs(*e.measured.measured_snr_db - *e.spec.snr_db);
        worst_snr_dev = std::max(worst_snr_dev, dev);
        if (dev > 0.01) ++bad;
      }
    }
    std::printf("%-12s entries=%zu worst_snr_dev=%.4f dB\n", m.name.c_str(),
                m.entries.size(), worst_snr_dev);
  }
  std::printf("subsets=%zu snr_violations=%d\n", subsets.size(), bad);
  return bad == 0 ? kExitOk : kExitVerifyFail;
}

int cmd_quads(const AppConfig& cfg) {
  World w = make_world(cfg);
  fs::create_directories(cfg.out);
  acx::Rng rng(acx::mix_seed(cfg.seed, 0x9dadull));
  std::vector<acx::Quadruplet> quads;
  quads.reserve(cfg.quad_count);
  std::size_t violations = 0;
  for (int i = 0; i < cfg.quad_count; ++i) {
    quads.push_back(acx::make_quadruplet(rng, w.pool.ids(), w.assets));
    violations += acx::validate_quadruplet(quads.back()).size();
  }
  acx::write_quadruplets_jsonl(quads, default_quads_path(cfg));
  std::printf("quadruplets=%d violations=%zu path=%s\n", cfg.quad_count,
              violations, default_quads_path(cfg).c_str());
  return violations == 0 ? kExitOk : kExitVerifyFail;
}

int cmd_embed(const AppConfig& cfg) {
  World w = make_world(cfg);
  fs::create_directories(cfg.out);
  std::vector<acx::Quadruplet> quads =
      acx::read_quadruplets_jsonl(default_quads_path(cfg));
  std::map<std::string, const acx::QuadItem*> degraded;
  std::map<std::string, bool> clean;
  for (const acx::Quadruplet& q : quads) {
    for (const acx::QuadItem* it : {&q.anchor, &q.positive, &q.hard_negative})
      degraded.emplace(it->utterance_id + "|" + it->spec.spec_id_hex(), it);
    clean[q.clean_ref] = true;
  }
  std::vector<std::pair<std::string, const acx::QuadItem*>> todo(
      degraded.begin(), degraded.end());
  std::vector<std::pair<std::string, acx::Embedding>> rows(todo.size() +
                                                           clean.size());
  acx::parallel_for(todo.size(), [&](std::size_t i) {
    const acx::QuadItem& it = *todo[i].second;
    acx::AudioBuffer deg =
        acx::apply_spec(w.pool.get(it.utterance_id), it.spec, w.assets);
    rows[i] = {todo[i].first, w.encoder.encode(deg)};
  });
  std::vector<std::string> clean_ids;
  for (const auto& [id, unused] : clean) clean_ids.push_back(id);
  acx::parallel_for(clean_ids.size(), [&](std::size_t i) {
    rows[todo.size() + i] = {clean_ids[i] + "|clean",
                             w.encoder.encode(w.pool.get(clean_ids[i]))};
  });
  std::string path = (fs::path(cfg.out) / "embeddings.acxe").string();
  acx::write_embeddings(rows, path);
  std::printf("embeddings=%zu dim=%d path=%s\n", rows.size(), w.encoder.dim(),
              path.c_str());
  return kExitOk;
}

int cmd_train(const AppConfig& cfg) {
  World w = make_world(cfg);
  fs::create_directories(cfg.out);
  std::vector<acx::Quadruplet> quads =
      acx::read_quadruplets_jsonl(default_quads_path(cfg));
  acx::TrainConfig tc;
  tc.adam.lr = cfg.train_lr;
  tc.batch_size = cfg.train_batch;
  tc.steps = cfg.train_steps;
  tc.seed = cfg.seed;
  tc.checkpoint_every = cfg.checkpoint_every;
  tc.checkpoint_path = (fs::path(cfg.out) / "head.acxc").string();
  tc.metrics_path = (fs::path(cfg.out) / "metrics.csv").string();
  acx::EmbeddingCache cache(w.pool, w.assets, w.encoder);
  cache.precompute(quads);
  acx::Checkpoint resume;
  const acx::Checkpoint* resume_ptr = nullptr;
  if (!cfg.resume_path.empty()) {
    resume = acx::read_checkpoint(cfg.resume_path);
    resume_ptr = &resume;
  }
  std::vector<acx::StepRecord> records;
  acx::Checkpoint cp = acx::train(tc, head_config(cfg), quads, cache,
                                  w.encoder, resume_ptr, &records);
  double final_total = records.empty() ? 0.0 : records.back().loss.total;
  std::printf("steps=%ld final_loss=%.6f checkpoint=%s metrics=%s\n", cp.step,
              final_total, tc.checkpoint_path.c_str(), tc.metrics_path.c_str());
  return kExitOk;
}

int cmd_eval(const AppConfig& cfg) {
  World w = make_world(cfg);
  fs::create_directories(cfg.out);
  acx::SweepContext ctx{w.pool, w.assets, w.encoder};
  acx::Representation raw = [](const acx::Embedding& e) { return e; };
  struct Job {
    std::string tag;
    acx::Representation rep;
  };
  std::vector<Job> jobs{{"raw", raw}};
  acx::Checkpoint cp;
  if (!cfg.checkpoint_path.empty()) {
    cp = acx::read_checkpoint(cfg.checkpoint_path);
    jobs.push_back({"acx", [&cp](const acx::Embedding& e) {
                      return acx::head_forward(cp.params, e);
                    }});
  }
  for (const Job& job : jobs) {
    acx::SweepResult noise = acx::run_noise_sweep(job.rep, ctx, cfg.seed,
                                                  cfg.eval_n_per_point, job.tag);
    acx::SweepResult reverb = acx::run_reverb_sweep(
        job.rep, ctx, cfg.seed, cfg.eval_n_per_point, job.tag);
    acx::SweepResult band = acx::run_bandwidth_sweep(
        job.rep, ctx, cfg.seed, cfg.eval_n_per_point, job.tag);
    fs::path base(cfg.out);
    acx::emit_csv(noise, (base / (job.tag + "_noise.csv")).string());
    acx::emit_csv(reverb, (base / (job.tag + "_reverb.csv")).string());
    acx::emit_csv(band, (base / (job.tag + "_bandwidth.csv")).string());
    std::vector<double> snr(noise.axis.size());
    for (std::size_t i = 0; i < snr.size(); ++i) snr[i] = std::stod(noise.axis[i]);
    std::printf("%s noise_spearman=%.4f files=%s/%s_{noise,reverb,bandwidth}.csv\n",
                job.tag.c_str(), acx::spearman(snr, noise.mean_sim_clean),
                cfg.out.c_str(), job.tag.c_str());
  }
  return kExitOk;
}

int cmd_gradcheck(const AppConfig& cfg, bool corrupt) {
  double worst = 0.0;
  acx::GradCheckReport worst_report;
  for (int k = 0; k < 20; ++k) {
    acx::GradCheckConfig gc;
    gc.seed = cfg.seed + static_cast<std::uint64_t>(k);
    gc.corrupt = corrupt;
    acx::GradCheckReport r = acx::run_gradcheck(gc);
    if (r.max_err >= worst) {
      worst = r.max_err;
      worst_report = r;
    }
  }
  std::printf("l_c=%.3e l_d=%.3e l_nd=%.3e l_nc=%.3e total=%.3e\n",
              worst_report.err_lc, worst_report.err_ld, worst_report.err_lnd,
              worst_report.err_lnc, worst_report.err_total);
  std::printf("max_rel_err=%.3e worst_loss=%s worst_param=%zu\n", worst,
              worst_report.worst_loss.c_str(), worst_report.worst_param);
  return worst < 1e-4 ? kExitOk : kExitVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acoustic context pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  AppConfig cfg;
  bool seed_set = false, jobs_set = false, out_set = false;
  std::uint64_t seed_flag = 1;
  int jobs_flag = 0;
  std::string out_flag;

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_flag, "master seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--jobs", jobs_flag, "worker count (0: default)")
      ->each([&](const std::string&) { jobs_set = true; });
  app.add_option("--out", out_flag, "output directory")
      ->each([&](const std::string&) { out_set = true; });

  CLI::App* synth = app.add_subcommand("synth", "materialize evaluation subsets");
  CLI::App* quadsc = app.add_subcommand("quads", "generate and validate quadruplets");
  CLI::App* embed = app.add_subcommand("embed", "encode quadruplet corpus");
  CLI::App* train = app.add_subcommand("train", "train the projection head");
  CLI::App* evalc = app.add_subcommand("eval", "run similarity sweeps");
  CLI::App* gradc = app.add_subcommand("gradcheck", "finite-difference gradient check");

  train->add_option("--resume", cfg.resume_path, "checkpoint to resume from");
  evalc->add_option("--checkpoint", cfg.checkpoint_path,
                    "trained head checkpoint (adds the acx sweeps)");
  bool corrupt = false;
  gradc->add_flag("--corrupt", corrupt, "negative control: must fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw acx::ConfigError("cannot open config: " + config_path);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw acx::ConfigError(std::string("bad config JSON: ") + e.what());
      }
      apply_json(cfg, j);
    }
    if (seed_set) cfg.seed = seed_flag;
    if (jobs_set) cfg.jobs = jobs_flag;
    if (out_set) cfg.out = out_flag;
    acx::set_num_jobs(cfg.jobs);

    if (*synth) return cmd_synth(cfg);
    if (*quadsc) return cmd_quads(cfg);
    if (*embed) return cmd_embed(cfg);
    if (*train) return cmd_train(cfg);
    if (*evalc) return cmd_eval(cfg);
    if (*gradc) return cmd_gradcheck(cfg, corrupt);
    return kExitConfigError;
  } catch (const acx::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const acx::ParamError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerifyFail;
  }
}
