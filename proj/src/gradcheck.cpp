// acx/gradcheck.cpp
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

#include "acx/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "acx/errors.hpp"
#include "acx/rng.hpp"

namespace acx {

namespace {

BatchEmbeddings random_batch(std::uint64_t seed, const GradCheckConfig& cfg) {
  Rng rng(mix_seed(0x96adc8ecULL, seed));
  BatchEmbeddings batch;
  auto draw = [&]() {
    Embedding e;
    e.values.resize(cfg.head.dim_in);
    for (auto& v : e.values) v = rng.normal();
    return e;
  };
  for (std::size_t i = 0; i < cfg.batch_size; ++i) {
    batch.anchors.push_back(draw());
    batch.positives.push_back(draw());
    batch.hards.push_back(draw());
  }
  return batch;
}

// The losses have non-differentiable points: d = 0 in the distance terms and
// s_hard = p_max at the cap. Small random nets also like to collapse every
// output onto one ray, parking the batch exactly on the d = 0 kink where
// finite differences are meaningless. Demand clearance from all kinks.
bool well_conditioned(const AcxHeadParams& params,
                      const BatchEmbeddings& batch) {
  const ProjectedBatch proj = project_batch(params, batch);
  const std::size_t b = proj.size();
  std::vector<const Embedding*> all;
  for (std::size_t i = 0; i < b; ++i) {
    all.push_back(&proj.anchors[i]);
    all.push_back(&proj.positives[i]);
    all.push_back(&proj.hards[i]);
  }
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j)
      if (l2_dist(*all[i], *all[j]) < 0.05) return false;
  for (std::size_t i = 0; i < b; ++i)
    if (min_relu_margin(params, batch.anchors[i]) < 1e-3 ||
        min_relu_margin(params, batch.positives[i]) < 1e-3 ||
        min_relu_margin(params, batch.hards[i]) < 1e-3)
      return false;
  double p_max = -1.0;
  for (std::size_t i = 0; i < b; ++i)
    p_max = std::max(p_max, cos_sim(proj.anchors[i], proj.positives[i]));
  for (std::size_t i = 0; i < b; ++i)
    if (std::abs(cos_sim(proj.anchors[i], proj.hards[i]) - p_max) < 1e-3)
      return false;
  return true;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
  BatchEmbeddings batch;
  AcxHeadParams params;
  bool found = false;
  for (std::uint64_t attempt = 0; attempt < 100 && !found; ++attempt) {
    const std::uint64_t s = mix_seed(cfg.seed, attempt);
    batch = random_batch(s, cfg);
    params = AcxHeadParams::init(cfg.head, s);
    found = well_conditioned(params, batch);
  }
  if (!found)
    throw DegenerateInputError(
        "gradcheck: no well-conditioned batch found for this seed");

  // The cap on the hard-negative logit is not differentiated, so the
  // numerical objective evaluates L_nc against the cap frozen at the base
  // point.
  const double p_max0 = loss_total(project_batch(params, batch)).p_max;

  struct Term {
    const char* name;
    LossSelect select;
    double (*eval)(const ProjectedBatch&, double p_max0);
    double* err_slot;
  };

  GradCheckReport report;
  const Term terms[] = {
      {"l_c", LossSelect{true, false, false, false},
       [](const ProjectedBatch& p, double) { return loss_lc(p); },
       &report.err_lc},
      {"l_d", LossSelect{false, true, false, false},
       [](const ProjectedBatch& p, double) { return loss_ld(p); },
       &report.err_ld},
      {"l_nd", LossSelect{false, false, true, false},
       [](const ProjectedBatch& p, double) { return loss_lnd(p); },
       &report.err_lnd},
      {"l_nc", LossSelect{false, false, false, true},
       [](const ProjectedBatch& p, double cap) {
         return loss_lnc_pinned(p, cap);
       },
       &report.err_lnc},
      {"total", LossSelect{},
       [](const ProjectedBatch& p, double cap) {
         return loss_lc(p) + loss_ld(p) + loss_lnd(p) +
                loss_lnc_pinned(p, cap);
       },
       &report.err_total},
  };

  const double h = cfg.fd_step;
  for (const Term& term : terms) {
    std::vector<double> analytic;
    head_backward(params, batch, analytic, term.select);
    if (cfg.corrupt && !analytic.empty()) analytic[0] += 1.0;
    for (std::size_t k = 0; k < params.flat.size(); ++k) {
      const double saved = params.flat[k];
      params.flat[k] = saved + h;
      const double up = term.eval(project_batch(params, batch), p_max0);
      params.flat[k] = saved - h;
      const double dn = term.eval(project_batch(params, batch), p_max0);
      params.flat[k] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double err = std::abs(analytic[k] - fd) /
                         std::max({1.0, std::abs(analytic[k]), std::abs(fd)});
      *term.err_slot = std::max(*term.err_slot, err);
      if (err > report.max_err) {
        report.max_err = err;
        report.worst_param = k;
        report.worst_loss = term.name;
      }
    }
  }
  return report;
}

}  // namespace acx
