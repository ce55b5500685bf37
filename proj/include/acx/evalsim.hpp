// acx/evalsim.hpp
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

#ifndef ACX_EVALSIM_HPP
#define ACX_EVALSIM_HPP

#include <functional>
#include <string>
#include <vector>

#include "acx/encoder.hpp"
#include "acx/scenario.hpp"

namespace acx {

// Maps a frozen-encoder embedding to the representation under study:
// identity for the raw encoder, the trained head for ACX.
using Representation = std::function<Embedding(const Embedding&)>;

struct SweepResult {
  std::string representation_tag;
  std::vector<std::string> axis;  // intensity labels (dB, Hz, or room class)
  std::vector<double> mean_sim_positive;
  std::vector<double> mean_sim_clean;
  int n_per_point = 0;
};

struct SweepContext {
  const UtterancePool& pool;
  const AssetResolver& assets;
  const MelStatEncoder& encoder;
};

// Each sweep fixes one distortion factor per point and measures, over
// n_per_point sampled (anchor, positive, clean) triples, the mean cosine
// similarity of anchor-vs-positive (same spec, different utterance) and
// anchor-vs-clean (the anchor's own utterance undistorted).

// SNR 0..30 dB in 1 dB steps, noise-only specs.
SweepResult run_noise_sweep(const Representation& model, const SweepContext& ctx,
                            std::uint64_t seed, int n_per_point,
                            const std::string& tag);

// Room classes large, medium, small; reverb-only specs.
SweepResult run_reverb_sweep(const Representation& model,
                             const SweepContext& ctx, std::uint64_t seed,
                             int n_per_point, const std::string& tag);

// Cutoff 1..8 kHz in 1 kHz steps, bandlimit-only specs.
SweepResult run_bandwidth_sweep(const Representation& model,
                                const SweepContext& ctx, std::uint64_t seed,
                                int n_per_point, const std::string& tag);

// CSV: header axis,mean_sim_positive,mean_sim_clean,n; 9 significant digits.
void emit_csv(const SweepResult& result, const std::string& path);

// Spearman rank correlation; average ranks on ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace acx

#endif  // ACX_EVALSIM_HPP
