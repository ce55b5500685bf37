// acx/head.hpp
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

#ifndef ACX_HEAD_HPP
#define ACX_HEAD_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "acx/encoder.hpp"

namespace acx {

struct AcxHeadConfig {
  int dim_in = 512;
  int hidden = 512;
  int dim_out = 1024;
  // Unit-normalizing the projection output bounds L_nd and ties the distance
  // and similarity objectives together; the un-normalized variant stays
  // runnable behind this flag.
  bool normalize_output = true;

  bool operator==(const AcxHeadConfig&) const = default;
};

// Two fully-connected ReLU layers plus a projection. Parameters live in one
// flat vector: [W1 | b1 | W2 | b2 | Wp | bp], matrices row-major.
struct AcxHeadParams {
  AcxHeadConfig cfg;
  std::vector<double> flat;

  static AcxHeadParams init(const AcxHeadConfig& cfg, std::uint64_t seed);

  std::size_t param_count() const { return flat.size(); }

  std::size_t off_w1() const { return 0; }
  std::size_t off_b1() const { return static_cast<std::size_t>(cfg.hidden) * cfg.dim_in; }
  std::size_t off_w2() const { return off_b1() + cfg.hidden; }
  std::size_t off_b2() const { return off_w2() + static_cast<std::size_t>(cfg.hidden) * cfg.hidden; }
  std::size_t off_wp() const { return off_b2() + cfg.hidden; }
  std::size_t off_bp() const { return off_wp() + static_cast<std::size_t>(cfg.dim_out) * cfg.hidden; }
};

// h1 = relu(W1 e + b1); h2 = relu(W2 h1 + b2); z = Wp h2 + bp;
// output = z / max(||z||, 1e-12) when normalize_output is set.
Embedding head_forward(const AcxHeadParams& params, const Embedding& e);

double cos_sim(const Embedding& x, const Embedding& y);
double l2_dist(const Embedding& x, const Embedding& y);

// Encoder outputs for one minibatch of quadruplets, pre-head. For anchor i
// the weak-negative set is {anchor_j, positive_j : j != i}.
struct BatchEmbeddings {
  std::vector<Embedding> anchors;
  std::vector<Embedding> positives;
  std::vector<Embedding> hards;

  std::size_t size() const { return anchors.size(); }
};

// Head outputs for the same batch (what the losses consume).
struct ProjectedBatch {
  std::vector<Embedding> anchors;
  std::vector<Embedding> positives;
  std::vector<Embedding> hards;

  std::size_t size() const { return anchors.size(); }
};

ProjectedBatch project_batch(const AcxHeadParams& params,
                             const BatchEmbeddings& batch);

struct LossBreakdown {
  double l_c = 0.0;
  double l_d = 0.0;
  double l_nd = 0.0;
  double l_nc = 0.0;
  double total = 0.0;
  double p_max = 0.0;
};

// Cross-entropy over cosine-similarity logits, one-hot on the positive.
double loss_lc(const ProjectedBatch& batch);
// Same structure with inverse-distance logits; d floored at 1e-6.
double loss_ld(const ProjectedBatch& batch);
// Negated sum of distances between every weak-negative item (all anchors and
// positives) and every hard negative.
double loss_lnd(const ProjectedBatch& batch);
// Cross-entropy with one-hot on the hard negative, whose similarity logit is
// capped at p_max = max_i s(anchor_i, positive_i). Returns (loss, p_max).
std::pair<double, double> loss_lnc(const ProjectedBatch& batch);
// Unweighted sum of the four terms, same summation order as the fields.
LossBreakdown loss_total(const ProjectedBatch& batch);

// Smallest |pre-activation| over both hidden layers for one input. The
// gradient checker uses it to keep test points clear of the ReLU kinks.
double min_relu_margin(const AcxHeadParams& params, const Embedding& e);

// L_nc evaluated with a caller-supplied cap instead of the batch's own p_max.
// Used when differentiating numerically, where the cap must stay constant.
double loss_lnc_pinned(const ProjectedBatch& batch, double p_max);

// Which loss terms participate in a backward pass (all by default; the
// gradient checker exercises them one at a time).
struct LossSelect {
  bool lc = true;
  bool ld = true;
  bool lnd = true;
  bool lnc = true;
};

// Analytic gradients of the selected loss terms w.r.t. every head parameter,
// through the unit-normalization and ReLUs, with p_max treated as a constant.
// grad is resized to params.flat.size(). Returns the full loss breakdown at
// the evaluation point.
LossBreakdown head_backward(const AcxHeadParams& params,
                            const BatchEmbeddings& batch,
                            std::vector<double>& grad,
                            const LossSelect& select = LossSelect{});

}  // namespace acx

#endif  // ACX_HEAD_HPP
