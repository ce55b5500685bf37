// acx/head.cpp
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

#include "acx/head.hpp"

#include <cmath>
#include <limits>

#include "acx/errors.hpp"
#include "acx/parallel.hpp"
#include "acx/rng.hpp"

namespace acx {

namespace {

constexpr double kNormEps = 1e-12;
constexpr double kDistFloor = 1e-6;

double vec_norm(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

double vec_dot(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

struct ForwardCache {
  std::vector<double> pre1, h1, pre2, h2, z, u;
  double z_norm = 0.0;
};

void forward_impl(const AcxHeadParams& p, const std::vector<double>& e,
                  ForwardCache& c) {
  const int din = p.cfg.dim_in;
  const int h = p.cfg.hidden;
  const int dout = p.cfg.dim_out;
  if (static_cast<int>(e.size()) != din)
    throw ParamError("head_forward: input dim mismatch");
  const double* w1 = p.flat.data() + p.off_w1();
  const double* b1 = p.flat.data() + p.off_b1();
  const double* w2 = p.flat.data() + p.off_w2();
  const double* b2 = p.flat.data() + p.off_b2();
  const double* wp = p.flat.data() + p.off_wp();
  const double* bp = p.flat.data() + p.off_bp();

  c.pre1.resize(h);
  c.h1.resize(h);
  for (int i = 0; i < h; ++i) {
    double acc = b1[i];
    const double* row = w1 + static_cast<std::size_t>(i) * din;
    for (int j = 0; j < din; ++j) acc += row[j] * e[j];
    c.pre1[i] = acc;
    c.h1[i] = acc > 0.0 ? acc : 0.0;
  }
  c.pre2.resize(h);
  c.h2.resize(h);
  for (int i = 0; i < h; ++i) {
    double acc = b2[i];
    const double* row = w2 + static_cast<std::size_t>(i) * h;
    for (int j = 0; j < h; ++j) acc += row[j] * c.h1[j];
    c.pre2[i] = acc;
    c.h2[i] = acc > 0.0 ? acc : 0.0;
  }
  c.z.resize(dout);
  for (int i = 0; i < dout; ++i) {
    double acc = bp[i];
    const double* row = wp + static_cast<std::size_t>(i) * h;
    for (int j = 0; j < h; ++j) acc += row[j] * c.h2[j];
    c.z[i] = acc;
  }
  c.z_norm = vec_norm(c.z);
  if (p.cfg.normalize_output) {
    const double m = std::max(c.z_norm, kNormEps);
    c.u.resize(dout);
    for (int i = 0; i < dout; ++i) c.u[i] = c.z[i] / m;
  } else {
    c.u = c.z;
  }
}

// Backprop one sample: grad_u -> parameter gradient contributions.
void backward_impl(const AcxHeadParams& p, const std::vector<double>& e,
                   const ForwardCache& c, const std::vector<double>& grad_u,
                   std::vector<double>& grad) {
  const int din = p.cfg.dim_in;
  const int h = p.cfg.hidden;
  const int dout = p.cfg.dim_out;
  const double* w2 = p.flat.data() + p.off_w2();
  const double* wp = p.flat.data() + p.off_wp();
  double* gw1 = grad.data() + p.off_w1();
  double* gb1 = grad.data() + p.off_b1();
  double* gw2 = grad.data() + p.off_w2();
  double* gb2 = grad.data() + p.off_b2();
  double* gwp = grad.data() + p.off_wp();
  double* gbp = grad.data() + p.off_bp();

  std::vector<double> dz(dout);
  if (p.cfg.normalize_output) {
    if (c.z_norm > kNormEps) {
      const double ug = vec_dot(c.u, grad_u);
      for (int i = 0; i < dout; ++i)
        dz[i] = (grad_u[i] - ug * c.u[i]) / c.z_norm;
    } else {
      for (int i = 0; i < dout; ++i) dz[i] = grad_u[i] / kNormEps;
    }
  } else {
    dz = grad_u;
  }

  std::vector<double> dh2(h, 0.0);
  for (int i = 0; i < dout; ++i) {
    const double g = dz[i];
    if (g == 0.0) continue;
    double* grow = gwp + static_cast<std::size_t>(i) * h;
    const double* row = wp + static_cast<std::size_t>(i) * h;
    for (int j = 0; j < h; ++j) {
      grow[j] += g * c.h2[j];
      dh2[j] += row[j] * g;
    }
    gbp[i] += g;
  }

  std::vector<double> dh1(h, 0.0);
  for (int i = 0; i < h; ++i) {
    const double g = c.pre2[i] > 0.0 ? dh2[i] : 0.0;
    if (g == 0.0) continue;
    double* grow = gw2 + static_cast<std::size_t>(i) * h;
    const double* row = w2 + static_cast<std::size_t>(i) * h;
    for (int j = 0; j < h; ++j) {
      grow[j] += g * c.h1[j];
      dh1[j] += row[j] * g;
    }
    gb2[i] += g;
  }

  for (int i = 0; i < h; ++i) {
    const double g = c.pre1[i] > 0.0 ? dh1[i] : 0.0;
    if (g == 0.0) continue;
    double* grow = gw1 + static_cast<std::size_t>(i) * din;
    for (int j = 0; j < din; ++j) grow[j] += g * e[j];
    gb1[i] += g;
  }
}

double cos_sim_vec(const std::vector<double>& x, const std::vector<double>& y) {
  const double nx = vec_norm(x), ny = vec_norm(y);
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return vec_dot(x, y) / (nx * ny);
}

double l2_dist_vec(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// coeff * d s(x,y) accumulated into gx, gy.
void add_cos_grad(const std::vector<double>& x, const std::vector<double>& y,
                  double coeff, std::vector<double>& gx,
                  std::vector<double>& gy) {
  const double nx = vec_norm(x), ny = vec_norm(y);
  if (nx == 0.0 || ny == 0.0) return;  // s defined as 0, constant
  const double s = vec_dot(x, y) / (nx * ny);
  for (std::size_t i = 0; i < x.size(); ++i) {
    gx[i] += coeff * (y[i] / (nx * ny) - s * x[i] / (nx * nx));
    gy[i] += coeff * (x[i] / (nx * ny) - s * y[i] / (ny * ny));
  }
}

// coeff * d d(x,y) accumulated into gx, gy.
void add_dist_grad(const std::vector<double>& x, const std::vector<double>& y,
                   double coeff, std::vector<double>& gx,
                   std::vector<double>& gy) {
  const double d = l2_dist_vec(x, y);
  if (d == 0.0) return;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = coeff * (x[i] - y[i]) / d;
    gx[i] += g;
    gy[i] -= g;
  }
}

// Stable -log softmax_0 plus the softmax vector.
double neg_log_softmax0(const std::vector<double>& logits,
                        std::vector<double>* probs) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double den = 0.0;
  for (double v : logits) den += std::exp(v - mx);
  if (probs) {
    probs->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
      (*probs)[i] = std::exp(logits[i] - mx) / den;
  }
  return -(logits[0] - mx - std::log(den));
}

// Weak-negative enumeration order for anchor i: increasing j != i, anchor_j
// then positive_j.
template <typename Fn>
void for_each_weak(std::size_t b, std::size_t i, const Fn& fn) {
  for (std::size_t j = 0; j < b; ++j) {
    if (j == i) continue;
    fn(/*is_anchor=*/true, j);
    fn(/*is_anchor=*/false, j);
  }
}

void require_batch(const ProjectedBatch& batch) {
  if (batch.size() < 2 || batch.positives.size() != batch.size() ||
      batch.hards.size() != batch.size())
    throw ParamError("losses require a consistent batch with B >= 2");
}

double compute_p_max(const ProjectedBatch& batch) {
  double p_max = -1.0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    p_max = std::max(p_max, cos_sim_vec(batch.anchors[i].values,
                                        batch.positives[i].values));
  return p_max;
}

}  // namespace

AcxHeadParams AcxHeadParams::init(const AcxHeadConfig& cfg, std::uint64_t seed) {
  AcxHeadParams p;
  p.cfg = cfg;
  const std::size_t n =
      static_cast<std::size_t>(cfg.hidden) * cfg.dim_in + cfg.hidden +
      static_cast<std::size_t>(cfg.hidden) * cfg.hidden + cfg.hidden +
      static_cast<std::size_t>(cfg.dim_out) * cfg.hidden + cfg.dim_out;
  p.flat.assign(n, 0.0);
  Rng rng(mix_seed(0xacc5ead0ULL, seed));
  auto he_fill = [&](std::size_t off, std::size_t count, int fan_in) {
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < count; ++i)
      p.flat[off + i] = std_dev * rng.normal();
  };
  he_fill(p.off_w1(), static_cast<std::size_t>(cfg.hidden) * cfg.dim_in,
          cfg.dim_in);
  he_fill(p.off_w2(), static_cast<std::size_t>(cfg.hidden) * cfg.hidden,
          cfg.hidden);
  he_fill(p.off_wp(), static_cast<std::size_t>(cfg.dim_out) * cfg.hidden,
          cfg.hidden);
  return p;
}

Embedding head_forward(const AcxHeadParams& params, const Embedding& e) {
  ForwardCache c;
  forward_impl(params, e.values, c);
  Embedding out;
  out.values = std::move(c.u);
  return out;
}

double min_relu_margin(const AcxHeadParams& params, const Embedding& e) {
  ForwardCache c;
  forward_impl(params, e.values, c);
  double m = std::numeric_limits<double>::infinity();
  for (double v : c.pre1) m = std::min(m, std::abs(v));
  for (double v : c.pre2) m = std::min(m, std::abs(v));
  return m;
}

double cos_sim(const Embedding& x, const Embedding& y) {
  if (x.dim() != y.dim()) throw ParamError("cos_sim: dim mismatch");
  return cos_sim_vec(x.values, y.values);
}

double l2_dist(const Embedding& x, const Embedding& y) {
  if (x.dim() != y.dim()) throw ParamError("l2_dist: dim mismatch");
  return l2_dist_vec(x.values, y.values);
}

ProjectedBatch project_batch(const AcxHeadParams& params,
                             const BatchEmbeddings& batch) {
  ProjectedBatch out;
  const std::size_t b = batch.size();
  out.anchors.resize(b);
  out.positives.resize(b);
  out.hards.resize(b);
  parallel_for(3 * b, [&](std::size_t k) {
    const std::size_t i = k % b;
    if (k < b)
      out.anchors[i] = head_forward(params, batch.anchors[i]);
    else if (k < 2 * b)
      out.positives[i] = head_forward(params, batch.positives[i]);
    else
      out.hards[i] = head_forward(params, batch.hards[i]);
  });
  return out;
}

double loss_lc(const ProjectedBatch& batch) {
  require_batch(batch);
  const std::size_t b = batch.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> logits;
    logits.push_back(
        cos_sim_vec(batch.anchors[i].values, batch.positives[i].values));
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      const auto& w = is_anchor ? batch.anchors[j] : batch.positives[j];
      logits.push_back(cos_sim_vec(batch.anchors[i].values, w.values));
    });
    loss += neg_log_softmax0(logits, nullptr);
  }
  return loss;
}

double loss_ld(const ProjectedBatch& batch) {
  require_batch(batch);
  const std::size_t b = batch.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> logits;
    logits.push_back(1.0 / std::max(l2_dist_vec(batch.anchors[i].values,
                                                batch.positives[i].values),
                                    kDistFloor));
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      const auto& w = is_anchor ? batch.anchors[j] : batch.positives[j];
      logits.push_back(
          1.0 / std::max(l2_dist_vec(batch.anchors[i].values, w.values),
                         kDistFloor));
    });
    loss += neg_log_softmax0(logits, nullptr);
  }
  return loss;
}

double loss_lnd(const ProjectedBatch& batch) {
  require_batch(batch);
  const std::size_t b = batch.size();
  double loss = 0.0;
  for (std::size_t n = 0; n < 2 * b; ++n) {
    const auto& w = n < b ? batch.anchors[n] : batch.positives[n - b];
    for (std::size_t m = 0; m < b; ++m)
      loss -= l2_dist_vec(w.values, batch.hards[m].values);
  }
  return loss;
}

double loss_lnc_pinned(const ProjectedBatch& batch, double p_max) {
  require_batch(batch);
  const std::size_t b = batch.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> logits;
    const double s_hard =
        cos_sim_vec(batch.anchors[i].values, batch.hards[i].values);
    logits.push_back(std::min(s_hard, p_max));
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      const auto& w = is_anchor ? batch.anchors[j] : batch.positives[j];
      logits.push_back(cos_sim_vec(batch.anchors[i].values, w.values));
    });
    loss += neg_log_softmax0(logits, nullptr);
  }
  return loss;
}

std::pair<double, double> loss_lnc(const ProjectedBatch& batch) {
  require_batch(batch);
  const double p_max = compute_p_max(batch);
  return {loss_lnc_pinned(batch, p_max), p_max};
}

LossBreakdown loss_total(const ProjectedBatch& batch) {
  LossBreakdown out;
  out.l_c = loss_lc(batch);
  out.l_d = loss_ld(batch);
  out.l_nd = loss_lnd(batch);
  auto [lnc, p_max] = loss_lnc(batch);
  out.l_nc = lnc;
  out.p_max = p_max;
  out.total = out.l_c + out.l_d + out.l_nd + out.l_nc;
  return out;
}

LossBreakdown head_backward(const AcxHeadParams& params,
                            const BatchEmbeddings& batch,
                            std::vector<double>& grad,
                            const LossSelect& select) {
  const std::size_t b = batch.size();
  if (b < 2 || batch.positives.size() != b || batch.hards.size() != b)
    throw ParamError("head_backward: need a consistent batch with B >= 2");

  // Forward all 3B samples with caches.
  std::vector<ForwardCache> ca(b), cp(b), ch(b);
  parallel_for(3 * b, [&](std::size_t k) {
    const std::size_t i = k % b;
    if (k < b)
      forward_impl(params, batch.anchors[i].values, ca[i]);
    else if (k < 2 * b)
      forward_impl(params, batch.positives[i].values, cp[i]);
    else
      forward_impl(params, batch.hards[i].values, ch[i]);
  });

  ProjectedBatch proj;
  proj.anchors.resize(b);
  proj.positives.resize(b);
  proj.hards.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    proj.anchors[i].values = ca[i].u;
    proj.positives[i].values = cp[i].u;
    proj.hards[i].values = ch[i].u;
  }
  LossBreakdown breakdown = loss_total(proj);

  const std::size_t d = proj.anchors[0].values.size();
  std::vector<std::vector<double>> ga(b, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> gp(b, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> gh(b, std::vector<double>(d, 0.0));
  auto weak_vec = [&](bool is_anchor, std::size_t j) -> const std::vector<double>& {
    return is_anchor ? proj.anchors[j].values : proj.positives[j].values;
  };
  auto weak_grad = [&](bool is_anchor, std::size_t j) -> std::vector<double>& {
    return is_anchor ? ga[j] : gp[j];
  };

  // L_c
  for (std::size_t i = 0; select.lc && i < b; ++i) {
    std::vector<double> logits;
    logits.push_back(cos_sim_vec(proj.anchors[i].values, proj.positives[i].values));
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      logits.push_back(cos_sim_vec(proj.anchors[i].values, weak_vec(is_anchor, j)));
    });
    std::vector<double> probs;
    neg_log_softmax0(logits, &probs);
    add_cos_grad(proj.anchors[i].values, proj.positives[i].values,
                 probs[0] - 1.0, ga[i], gp[i]);
    std::size_t k = 1;
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      add_cos_grad(proj.anchors[i].values, weak_vec(is_anchor, j), probs[k],
                   ga[i], weak_grad(is_anchor, j));
      ++k;
    });
  }

  // L_d
  for (std::size_t i = 0; select.ld && i < b; ++i) {
    std::vector<double> dists;
    dists.push_back(
        l2_dist_vec(proj.anchors[i].values, proj.positives[i].values));
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      dists.push_back(l2_dist_vec(proj.anchors[i].values, weak_vec(is_anchor, j)));
    });
    std::vector<double> logits(dists.size());
    for (std::size_t k = 0; k < dists.size(); ++k)
      logits[k] = 1.0 / std::max(dists[k], kDistFloor);
    std::vector<double> probs;
    neg_log_softmax0(logits, &probs);
    // d(logit)/dd = -1/d^2 above the floor, 0 inside it.
    auto coeff = [&](std::size_t k, double target) {
      if (dists[k] <= kDistFloor) return 0.0;
      return (probs[k] - target) * (-1.0 / (dists[k] * dists[k]));
    };
    add_dist_grad(proj.anchors[i].values, proj.positives[i].values,
                  coeff(0, 1.0), ga[i], gp[i]);
    std::size_t k = 1;
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      add_dist_grad(proj.anchors[i].values, weak_vec(is_anchor, j),
                    coeff(k, 0.0), ga[i], weak_grad(is_anchor, j));
      ++k;
    });
  }

  // L_nd
  for (std::size_t n = 0; select.lnd && n < 2 * b; ++n) {
    const bool is_anchor = n < b;
    const std::size_t j = is_anchor ? n : n - b;
    for (std::size_t m = 0; m < b; ++m)
      add_dist_grad(weak_vec(is_anchor, j), proj.hards[m].values, -1.0,
                    weak_grad(is_anchor, j), gh[m]);
  }

  // L_nc (p_max is a constant for differentiation)
  const double p_max = breakdown.p_max;
  for (std::size_t i = 0; select.lnc && i < b; ++i) {
    const double s_hard =
        cos_sim_vec(proj.anchors[i].values, proj.hards[i].values);
    std::vector<double> logits;
    logits.push_back(std::min(s_hard, p_max));
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      logits.push_back(cos_sim_vec(proj.anchors[i].values, weak_vec(is_anchor, j)));
    });
    std::vector<double> probs;
    neg_log_softmax0(logits, &probs);
    if (s_hard <= p_max)  // clamp region has zero slope
      add_cos_grad(proj.anchors[i].values, proj.hards[i].values,
                   probs[0] - 1.0, ga[i], gh[i]);
    std::size_t k = 1;
    for_each_weak(b, i, [&](bool is_anchor, std::size_t j) {
      add_cos_grad(proj.anchors[i].values, weak_vec(is_anchor, j), probs[k],
                   ga[i], weak_grad(is_anchor, j));
      ++k;
    });
  }

  grad.assign(params.flat.size(), 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    backward_impl(params, batch.anchors[i].values, ca[i], ga[i], grad);
    backward_impl(params, batch.positives[i].values, cp[i], gp[i], grad);
    backward_impl(params, batch.hards[i].values, ch[i], gh[i], grad);
  }
  return breakdown;
}

}  // namespace acx
