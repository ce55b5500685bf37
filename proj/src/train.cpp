// acx/train.cpp
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

#include "acx/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "acx/errors.hpp"
#include "acx/parallel.hpp"
#include "acx/rng.hpp"

namespace acx {

namespace {

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
}

void put_u64le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(os, b, 8);
}

std::uint64_t get_u64le(std::istream& is) {
  unsigned char b[8];
  get_bytes(is, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64le(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64le(os, v);
}

double get_f64le(std::istream& is) {
  std::uint64_t v = get_u64le(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

void put_f64_vec(std::ostream& os, const std::vector<double>& v) {
  for (double d : v) put_f64le(os, d);
}

std::vector<double> get_f64_vec(std::istream& is, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = get_f64le(is);
  return v;
}

std::string degraded_key(const QuadItem& item) {
  return item.utterance_id + "|" + item.spec.spec_id_hex();
}

std::string clean_key(const std::string& utterance_id) {
  return utterance_id + "|clean";
}

}  // namespace

AdamOptimizer::AdamOptimizer(std::size_t param_count, const AdamConfig& config)
    : config_(config), m_(param_count, 0.0), v_(param_count, 0.0) {}

void AdamOptimizer::step(std::vector<double>& params,
                         const std::vector<double>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ParamError("AdamOptimizer: size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, t_);
  const double bc2 = 1.0 - std::pow(config_.beta2, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

void AdamOptimizer::restore(long t, std::vector<double> m,
                            std::vector<double> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw ParamError("AdamOptimizer::restore: size mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void write_checkpoint(const Checkpoint& cp, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write("ACXC", 4);
  put_u64le(os, 1);  // version
  put_u64le(os, static_cast<std::uint64_t>(cp.params.cfg.dim_in));
  put_u64le(os, static_cast<std::uint64_t>(cp.params.cfg.hidden));
  put_u64le(os, static_cast<std::uint64_t>(cp.params.cfg.dim_out));
  put_u64le(os, cp.params.cfg.normalize_output ? 1 : 0);
  put_u64le(os, static_cast<std::uint64_t>(cp.step));
  put_u64le(os, cp.train_seed);
  put_f64le(os, cp.adam.lr);
  put_f64le(os, cp.adam.beta1);
  put_f64le(os, cp.adam.beta2);
  put_f64le(os, cp.adam.eps);
  put_u64le(os, static_cast<std::uint64_t>(cp.adam_t));
  put_u64le(os, cp.params.flat.size());
  put_f64_vec(os, cp.params.flat);
  put_f64_vec(os, cp.adam_m);
  put_f64_vec(os, cp.adam_v);
  if (!os) throw IoError("checkpoint write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint: " + path);
  char magic[4];
  get_bytes(is, magic, 4);
  if (!is || std::memcmp(magic, "ACXC", 4) != 0)
    throw FormatError("bad checkpoint magic: " + path);
  if (get_u64le(is) != 1) throw FormatError("unsupported checkpoint version");
  Checkpoint cp;
  cp.params.cfg.dim_in = static_cast<int>(get_u64le(is));
  cp.params.cfg.hidden = static_cast<int>(get_u64le(is));
  cp.params.cfg.dim_out = static_cast<int>(get_u64le(is));
  cp.params.cfg.normalize_output = get_u64le(is) != 0;
  cp.step = static_cast<long>(get_u64le(is));
  cp.train_seed = get_u64le(is);
  cp.adam.lr = get_f64le(is);
  cp.adam.beta1 = get_f64le(is);
  cp.adam.beta2 = get_f64le(is);
  cp.adam.eps = get_f64le(is);
  cp.adam_t = static_cast<long>(get_u64le(is));
  const std::size_t n = get_u64le(is);
  cp.params.flat = get_f64_vec(is, n);
  cp.adam_m = get_f64_vec(is, n);
  cp.adam_v = get_f64_vec(is, n);
  if (!is) throw FormatError("truncated checkpoint: " + path);
  return cp;
}

EmbeddingCache::EmbeddingCache(const UtterancePool& pool,
                               const AssetResolver& assets,
                               const MelStatEncoder& encoder)
    : pool_(pool), assets_(assets), encoder_(encoder) {}

void EmbeddingCache::precompute(const std::vector<Quadruplet>& quads) {
  std::set<std::string> want;
  std::vector<const QuadItem*> items;
  std::vector<std::string> cleans;
  auto add_item = [&](const QuadItem& it) {
    if (want.insert(degraded_key(it)).second) items.push_back(&it);
  };
  for (const auto& q : quads) {
    add_item(q.anchor);
    add_item(q.positive);
    add_item(q.hard_negative);
    if (want.insert(clean_key(q.clean_ref)).second)
      cleans.push_back(q.clean_ref);
  }
  std::vector<Embedding> item_embs(items.size());
  std::vector<Embedding> clean_embs(cleans.size());
  parallel_for(items.size() + cleans.size(), [&](std::size_t k) {
    if (k < items.size()) {
      const QuadItem& it = *items[k];
      AudioBuffer degraded =
          apply_spec(pool_.get(it.utterance_id), it.spec, assets_);
      item_embs[k] = encoder_.encode(degraded);
    } else {
      const std::string& id = cleans[k - items.size()];
      clean_embs[k - items.size()] = encoder_.encode(pool_.get(id));
    }
  });
  for (std::size_t k = 0; k < items.size(); ++k)
    cache_[degraded_key(*items[k])] = std::move(item_embs[k]);
  for (std::size_t k = 0; k < cleans.size(); ++k)
    cache_[clean_key(cleans[k])] = std::move(clean_embs[k]);
}

const Embedding& EmbeddingCache::degraded(const QuadItem& item) {
  const std::string key = degraded_key(item);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    AudioBuffer buf = apply_spec(pool_.get(item.utterance_id), item.spec, assets_);
    it = cache_.emplace(key, encoder_.encode(buf)).first;
  }
  return it->second;
}

const Embedding& EmbeddingCache::clean(const std::string& utterance_id) {
  const std::string key = clean_key(utterance_id);
  auto it = cache_.find(key);
  if (it == cache_.end())
    it = cache_.emplace(key, encoder_.encode(pool_.get(utterance_id))).first;
  return it->second;
}

Checkpoint train(const TrainConfig& config, const AcxHeadConfig& head_cfg,
                 const std::vector<Quadruplet>& quads, EmbeddingCache& cache,
                 const MelStatEncoder& encoder, const Checkpoint* resume_from,
                 std::vector<StepRecord>* records) {
  if (quads.size() < static_cast<std::size_t>(config.batch_size))
    throw ConfigError("train: quadruplet pool smaller than batch size");
  if (config.batch_size < 2) throw ParamError("train: batch_size must be >= 2");

  const std::uint64_t encoder_checksum = encoder.params_checksum();

  AcxHeadParams params;
  AdamOptimizer adam(0, config.adam);
  long start_step = 0;
  if (resume_from) {
    if (!(resume_from->params.cfg == head_cfg))
      throw ConfigError("train: checkpoint head config mismatch");
    params = resume_from->params;
    adam = AdamOptimizer(params.flat.size(), resume_from->adam);
    adam.restore(resume_from->adam_t, resume_from->adam_m, resume_from->adam_v);
    start_step = resume_from->step;
  } else {
    params = AcxHeadParams::init(head_cfg, mix_seed(config.seed, 0x1217ULL));
    adam = AdamOptimizer(params.flat.size(), config.adam);
  }

  cache.precompute(quads);

  std::vector<double> grad;
  for (long step = start_step; step < config.steps; ++step) {
    // Batch selection depends only on (seed, step): resume is exact.
    Rng rng(mix_seed(config.seed, 0xba7c4ULL, static_cast<std::uint64_t>(step)));
    std::vector<std::size_t> chosen;
    std::set<std::uint64_t> spec_ids;
    long attempts = 0;
    const long max_attempts = 100L * config.batch_size;
    while (static_cast<int>(chosen.size()) < config.batch_size) {
      if (++attempts > max_attempts)
        throw ConfigError("train: cannot assemble spec-distinct batch");
      std::size_t idx = rng.uniform_index(quads.size());
      const Quadruplet& q = quads[idx];
      if (!spec_ids.insert(q.anchor.spec.spec_id()).second) continue;
      chosen.push_back(idx);
    }

    BatchEmbeddings batch;
    for (std::size_t idx : chosen) {
      const Quadruplet& q = quads[idx];
      batch.anchors.push_back(cache.degraded(q.anchor));
      batch.positives.push_back(cache.degraded(q.positive));
      batch.hards.push_back(cache.degraded(q.hard_negative));
    }

    LossBreakdown loss = head_backward(params, batch, grad);
    if (!std::isfinite(loss.total)) {
      std::string dump_path = config.metrics_path.empty()
                                  ? "acx_bad_batch.jsonl"
                                  : config.metrics_path + ".bad_batch.jsonl";
      std::vector<Quadruplet> bad;
      for (std::size_t idx : chosen) bad.push_back(quads[idx]);
      write_quadruplets_jsonl(bad, dump_path);
      throw DegenerateInputError("train: non-finite loss at step " +
                                 std::to_string(step) + "; batch dumped to " +
                                 dump_path);
    }
    adam.step(params.flat, grad);
    if (records) records->push_back({step, loss});

    if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() &&
        (step + 1) % config.checkpoint_every == 0) {
      Checkpoint cp{params, step + 1, config.seed, adam.config(),
                    adam.step_count(), adam.m(), adam.v()};
      write_checkpoint(cp, config.checkpoint_path);
    }
  }

  if (encoder.params_checksum() != encoder_checksum)
    throw ConfigError("train: frozen encoder parameters changed during run");

  Checkpoint final{params, config.steps, config.seed, adam.config(),
                   adam.step_count(), adam.m(), adam.v()};
  if (!config.checkpoint_path.empty())
    write_checkpoint(final, config.checkpoint_path);
  return final;
}

void write_metrics_csv(const std::vector<StepRecord>& records,
                       const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write metrics: " + path);
  os << "step,l_c,l_d,l_nd,l_nc,total,p_max\n";
  os.precision(12);
  for (const auto& r : records) {
    os << r.step << ',' << r.loss.l_c << ',' << r.loss.l_d << ',' << r.loss.l_nd
       << ',' << r.loss.l_nc << ',' << r.loss.total << ',' << r.loss.p_max
       << '\n';
  }
  if (!os) throw IoError("metrics write failed: " + path);
}

}  // namespace acx
