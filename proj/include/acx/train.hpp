// acx/train.hpp
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

#ifndef ACX_TRAIN_HPP
#define ACX_TRAIN_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "acx/head.hpp"
#include "acx/quadruplet.hpp"

namespace acx {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t param_count, const AdamConfig& config);

  void step(std::vector<double>& params, const std::vector<double>& grad);

  long step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }
  void restore(long t, std::vector<double> m, std::vector<double> v);

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 8;
  int steps = 500;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  std::string checkpoint_path;
  std::string metrics_path;
};

struct Checkpoint {
  AcxHeadParams params;
  long step = 0;
  std::uint64_t train_seed = 0;
  AdamConfig adam;
  long adam_t = 0;
  std::vector<double> adam_m, adam_v;
};

// Versioned binary: magic "ACXC", version, head shapes, parameters and
// optimizer moments as 64-bit little-endian floats, step and seed.
void write_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// Caches degraded-then-encoded embeddings keyed by (utterance, spec).
// Precompute fills the cache in parallel with deterministic results.
class EmbeddingCache {
 public:
  EmbeddingCache(const UtterancePool& pool, const AssetResolver& assets,
                 const MelStatEncoder& encoder);

  void precompute(const std::vector<Quadruplet>& quads);
  const Embedding& degraded(const QuadItem& item);
  const Embedding& clean(const std::string& utterance_id);

 private:
  const UtterancePool& pool_;
  const AssetResolver& assets_;
  const MelStatEncoder& encoder_;
  std::map<std::string, Embedding> cache_;
};

struct StepRecord {
  long step = 0;
  LossBreakdown loss;
};

// Trains the head on a pool of quadruplets. Each step derives its batch from
// (seed, step) alone, so resuming from a checkpoint reproduces the exact
// trajectory. Asserts the encoder checksum is unchanged at the end. Throws
// on non-finite loss after dumping the offending batch next to the metrics.
Checkpoint train(const TrainConfig& config, const AcxHeadConfig& head_cfg,
                 const std::vector<Quadruplet>& quads, EmbeddingCache& cache,
                 const MelStatEncoder& encoder,
                 const Checkpoint* resume_from = nullptr,
                 std::vector<StepRecord>* records = nullptr);

void write_metrics_csv(const std::vector<StepRecord>& records,
                       const std::string& path);

}  // namespace acx

#endif  // ACX_TRAIN_HPP
