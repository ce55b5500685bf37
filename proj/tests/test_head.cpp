#include <doctest.h>

#include <cmath>
#include <vector>

#include "acx/errors.hpp"
#include "acx/gradcheck.hpp"
#include "acx/head.hpp"
#include "acx/rng.hpp"

using namespace acx;

namespace {

double norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

// Cholesky factor of a small SPD Gram matrix; row i is a unit vector whose
// pairwise dot products reproduce G exactly (up to fp).
std::vector<std::vector<double>> cholesky(
    const std::vector<std::vector<double>>& g) {
  const std::size_t n = g.size();
  std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = g[i][j];
      for (std::size_t k = 0; k < j; ++k) acc -= l[i][k] * l[j][k];
      l[i][j] = (i == j) ? std::sqrt(acc) : acc / l[j][j];
    }
  }
  return l;
}

Embedding vec(std::vector<double> v) {
  Embedding e;
  e.values = std::move(v);
  return e;
}

// ---------------------------------------------------------------------------
// Independent brute-force loss enumeration, sharing no code with the library.
// ---------------------------------------------------------------------------

double oracle_cos(const std::vector<double>& x, const std::vector<double>& y) {
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += x[i] * x[i];
    yy += y[i] * y[i];
    xy += x[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) return 0.0;
  return xy / std::sqrt(xx * yy);
}

double oracle_dist(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(acc);
}

double oracle_ce(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double den = 0.0;
  for (double v : logits) den += std::exp(v - mx);
  return -(logits[0] - mx) + std::log(den);
}

// Weak-negative pool for anchor i: every other quadruplet's anchor and
// positive, in any order (softmax cross-entropy is order-invariant).
std::vector<const std::vector<double>*> oracle_weaks(const ProjectedBatch& b,
                                                     std::size_t i) {
  std::vector<const std::vector<double>*> out;
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (j == i) continue;
    out.push_back(&b.anchors[j].values);
    out.push_back(&b.positives[j].values);
  }
  return out;
}

double oracle_lc(const ProjectedBatch& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::vector<double> logits{oracle_cos(b.anchors[i].values,
                                          b.positives[i].values)};
    for (auto* w : oracle_weaks(b, i))
      logits.push_back(oracle_cos(b.anchors[i].values, *w));
    total += oracle_ce(logits);
  }
  return total;
}

double oracle_ld(const ProjectedBatch& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::vector<double> logits{
        1.0 / std::max(oracle_dist(b.anchors[i].values, b.positives[i].values),
                       1e-6)};
    for (auto* w : oracle_weaks(b, i))
      logits.push_back(
          1.0 / std::max(oracle_dist(b.anchors[i].values, *w), 1e-6));
    total += oracle_ce(logits);
  }
  return total;
}

double oracle_lnd(const ProjectedBatch& b) {
  double total = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j)
    for (std::size_t m = 0; m < b.size(); ++m) {
      total -= oracle_dist(b.anchors[j].values, b.hards[m].values);
      total -= oracle_dist(b.positives[j].values, b.hards[m].values);
    }
  return total;
}

double oracle_lnc(const ProjectedBatch& b) {
  double p_max = -1.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    p_max = std::max(p_max,
                     oracle_cos(b.anchors[i].values, b.positives[i].values));
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::vector<double> logits{std::min(
        oracle_cos(b.anchors[i].values, b.hards[i].values), p_max)};
    for (auto* w : oracle_weaks(b, i))
      logits.push_back(oracle_cos(b.anchors[i].values, *w));
    total += oracle_ce(logits);
  }
  return total;
}

ProjectedBatch random_projected(std::uint64_t seed, std::size_t b,
                                std::size_t dim) {
  Rng rng(seed);
  ProjectedBatch out;
  auto draw = [&]() {
    Embedding e;
    for (std::size_t k = 0; k < dim; ++k) e.values.push_back(rng.normal());
    return e;
  };
  for (std::size_t i = 0; i < b; ++i) {
    out.anchors.push_back(draw());
    out.positives.push_back(draw());
    out.hards.push_back(draw());
  }
  return out;
}

}  // namespace

TEST_CASE("head output is unit-normalized") {
  AcxHeadConfig cfg{16, 12, 8, true};
  AcxHeadParams p = AcxHeadParams::init(cfg, 1);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    Embedding e;
    for (int k = 0; k < 16; ++k) e.values.push_back(rng.normal());
    Embedding out = head_forward(p, e);
    REQUIRE(out.dim() == 8);
    CHECK(norm(out.values) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("normalization is a config flag") {
  AcxHeadConfig cfg{8, 6, 4, false};
  AcxHeadParams p = AcxHeadParams::init(cfg, 1);
  Rng rng(3);
  bool saw_non_unit = false;
  for (int i = 0; i < 10; ++i) {
    Embedding e;
    for (int k = 0; k < 8; ++k) e.values.push_back(rng.normal());
    if (std::abs(norm(head_forward(p, e).values) - 1.0) > 1e-6)
      saw_non_unit = true;
  }
  CHECK(saw_non_unit);
}

TEST_CASE("zero parameters map everything to the zero vector") {
  AcxHeadConfig cfg{8, 6, 4, true};
  AcxHeadParams p = AcxHeadParams::init(cfg, 1);
  for (auto& v : p.flat) v = 0.0;
  Embedding e;
  e.values.assign(8, 1.0);
  Embedding out = head_forward(p, e);
  for (double v : out.values) CHECK(v == 0.0);
}

TEST_CASE("with zero biases the normalized output is scale-invariant") {
  AcxHeadConfig cfg{8, 6, 4, true};
  AcxHeadParams p = AcxHeadParams::init(cfg, 5);
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.hidden); ++i) {
    p.flat[p.off_b1() + i] = 0.0;
    p.flat[p.off_b2() + i] = 0.0;
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.dim_out); ++i)
    p.flat[p.off_bp() + i] = 0.0;
  Embedding e;
  Rng rng(6);
  for (int k = 0; k < 8; ++k) e.values.push_back(rng.normal());
  Embedding e2 = e;
  for (auto& v : e2.values) v *= 2.0;
  Embedding a = head_forward(p, e), b = head_forward(p, e2);
  for (std::size_t k = 0; k < a.dim(); ++k)
    CHECK(std::abs(a.values[k] - b.values[k]) < 1e-9);
}

TEST_CASE("parameter count matches the layer shapes") {
  AcxHeadConfig cfg{10, 7, 5, true};
  AcxHeadParams p = AcxHeadParams::init(cfg, 1);
  CHECK(p.flat.size() == 10u * 7 + 7 + 7u * 7 + 7 + 7u * 5 + 5);
  AcxHeadParams q = AcxHeadParams::init(cfg, 1);
  CHECK(p.flat == q.flat);
  AcxHeadParams r = AcxHeadParams::init(cfg, 2);
  CHECK(p.flat != r.flat);
}

TEST_CASE("cos_sim and l2_dist basics") {
  Embedding x = vec({1.0, 0.0});
  Embedding y = vec({0.0, 1.0});
  CHECK(cos_sim(x, y) == doctest::Approx(0.0));
  CHECK(cos_sim(x, x) == doctest::Approx(1.0));
  CHECK(l2_dist(x, y) == doctest::Approx(std::sqrt(2.0)));
  Embedding z = vec({1.0, 0.0, 0.0});
  CHECK_THROWS_AS(cos_sim(x, z), ParamError);
  CHECK_THROWS_AS(l2_dist(x, z), ParamError);
  CHECK(cos_sim(vec({0.0, 0.0}), x) == 0.0);
}

TEST_CASE("frozen oracle: L_c on the 0.9/0.1 similarity batch") {
  auto l = cholesky({{1.0, 0.9, 0.1, 0.1},
                     {0.9, 1.0, 0.1, 0.1},
                     {0.1, 0.1, 1.0, 0.9},
                     {0.1, 0.1, 0.9, 1.0}});
  ProjectedBatch b;
  b.anchors = {vec(l[0]), vec(l[2])};
  b.positives = {vec(l[1]), vec(l[3])};
  b.hards = {vec(l[1]), vec(l[3])};  // unused by L_c
  CHECK(std::abs(loss_lc(b) - 2.0 * 0.6411472830263617) < 1e-9);
}

TEST_CASE("frozen oracle: L_d with d(a,p)=0.5 and weak distances sqrt(2)") {
  // Unit vectors: d = 0.5 means s = 0.875; orthogonal pairs have d = sqrt(2).
  auto l = cholesky({{1.0, 0.875, 0.0, 0.0},
                     {0.875, 1.0, 0.0, 0.0},
                     {0.0, 0.0, 1.0, 0.875},
                     {0.0, 0.0, 0.875, 1.0}});
  ProjectedBatch b;
  b.anchors = {vec(l[0]), vec(l[2])};
  b.positives = {vec(l[1]), vec(l[3])};
  b.hards = {vec(l[1]), vec(l[3])};
  CHECK(std::abs(loss_ld(b) - 2.0 * 0.4375779476072963) < 1e-9);
}

TEST_CASE("frozen oracle: L_nc caps the hard logit at p_max") {
  // s(a_i, p_i) = 0.8 so p_max = 0.8; s(a_i, h_i) = 0.99 gets capped; weak
  // sims 0.1. Hards live partly in two extra dimensions.
  auto l = cholesky({{1.0, 0.8, 0.1, 0.1},
                     {0.8, 1.0, 0.1, 0.1},
                     {0.1, 0.1, 1.0, 0.8},
                     {0.1, 0.1, 0.8, 1.0}});
  auto pad = [](std::vector<double> v) {
    v.resize(6, 0.0);
    return v;
  };
  const double c = std::sqrt(1.0 - 0.99 * 0.99);
  auto mk_hard = [&](const std::vector<double>& a, int axis) {
    std::vector<double> h = a;
    h.resize(6, 0.0);
    for (auto& v : h) v *= 0.99;
    h[axis] = c;
    return h;
  };
  ProjectedBatch b;
  b.anchors = {vec(pad(l[0])), vec(pad(l[2]))};
  b.positives = {vec(pad(l[1])), vec(pad(l[3]))};
  b.hards = {vec(mk_hard(l[0], 4)), vec(mk_hard(l[2], 5))};
  auto [lnc, p_max] = loss_lnc(b);
  CHECK(p_max == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::abs(lnc - 2.0 * 0.6897266409702164) < 1e-9);
}

TEST_CASE("frozen oracle: L_nd over orthogonal weak/hard sets") {
  ProjectedBatch b;
  b.anchors = {vec({1.0, 0.0}), vec({1.0, 0.0})};
  b.positives = {vec({1.0, 0.0}), vec({1.0, 0.0})};
  b.hards = {vec({0.0, 1.0}), vec({0.0, 1.0})};
  // 2B * B = 8 pairs, each at distance sqrt(2).
  CHECK(std::abs(loss_lnd(b) - (-8.0 * std::sqrt(2.0))) < 1e-12);
}

TEST_CASE("identical embeddings give a finite, known total") {
  ProjectedBatch b;
  Embedding e = vec({0.6, 0.8});
  b.anchors = {e, e};
  b.positives = {e, e};
  b.hards = {e, e};
  LossBreakdown lb = loss_total(b);
  CHECK(std::isfinite(lb.total));
  CHECK(lb.l_nd == 0.0);
  CHECK(lb.l_c == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-12));
  CHECK(lb.l_nc == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-12));
  CHECK(lb.total == lb.l_c + lb.l_d + lb.l_nd + lb.l_nc);
}

TEST_CASE("losses match independent enumeration on random batches") {
  for (std::size_t b_size : {2u, 3u, 5u}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ProjectedBatch b = random_projected(seed * 31 + b_size, b_size, 7);
      CHECK(std::abs(loss_lc(b) - oracle_lc(b)) < 1e-9);
      CHECK(std::abs(loss_ld(b) - oracle_ld(b)) < 1e-9);
      CHECK(std::abs(loss_lnd(b) - oracle_lnd(b)) < 1e-9);
      CHECK(std::abs(loss_lnc(b).first - oracle_lnc(b)) < 1e-9);
      LossBreakdown lb = loss_total(b);
      CHECK(lb.total == lb.l_c + lb.l_d + lb.l_nd + lb.l_nc);
    }
  }
}

TEST_CASE("losses are invariant under quadruplet permutation") {
  ProjectedBatch b = random_projected(44, 4, 6);
  ProjectedBatch p;
  for (std::size_t i : {2u, 0u, 3u, 1u}) {
    p.anchors.push_back(b.anchors[i]);
    p.positives.push_back(b.positives[i]);
    p.hards.push_back(b.hards[i]);
  }
  LossBreakdown lb = loss_total(b), lp = loss_total(p);
  CHECK(std::abs(lb.l_c - lp.l_c) < 1e-9);
  CHECK(std::abs(lb.l_d - lp.l_d) < 1e-9);
  CHECK(std::abs(lb.l_nd - lp.l_nd) < 1e-9);
  CHECK(std::abs(lb.l_nc - lp.l_nc) < 1e-9);
  CHECK(lb.p_max == doctest::Approx(lp.p_max).epsilon(1e-12));
}

TEST_CASE("L_nd is bounded below for unit-normalized batches") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ProjectedBatch b = random_projected(seed, 3, 5);
    for (auto* group : {&b.anchors, &b.positives, &b.hards})
      for (auto& e : *group) {
        const double n = norm(e.values);
        for (auto& v : e.values) v /= n;
      }
    const double bound = -2.0 * (2.0 * b.size() * b.size());
    CHECK(loss_lnd(b) >= bound);
    CHECK(loss_total(b).total >= bound);  // cross-entropies are nonnegative
  }
}

TEST_CASE("losses require a consistent batch of at least two") {
  ProjectedBatch b = random_projected(1, 1, 4);
  CHECK_THROWS_AS(loss_lc(b), ParamError);
  ProjectedBatch lop = random_projected(1, 3, 4);
  lop.hards.pop_back();
  CHECK_THROWS_AS(loss_total(lop), ParamError);
}

TEST_CASE("project_batch agrees with per-item forward") {
  AcxHeadConfig cfg{6, 5, 4, true};
  AcxHeadParams p = AcxHeadParams::init(cfg, 9);
  Rng rng(10);
  BatchEmbeddings batch;
  for (int i = 0; i < 3; ++i) {
    auto draw = [&]() {
      Embedding e;
      for (int k = 0; k < 6; ++k) e.values.push_back(rng.normal());
      return e;
    };
    batch.anchors.push_back(draw());
    batch.positives.push_back(draw());
    batch.hards.push_back(draw());
  }
  ProjectedBatch proj = project_batch(p, batch);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(proj.anchors[i].values == head_forward(p, batch.anchors[i]).values);
    CHECK(proj.positives[i].values ==
          head_forward(p, batch.positives[i]).values);
    CHECK(proj.hards[i].values == head_forward(p, batch.hards[i]).values);
  }
}

TEST_CASE("analytic gradients pass finite-difference verification") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    GradCheckConfig cfg;
    cfg.seed = seed;
    GradCheckReport r = run_gradcheck(cfg);
    CHECK(r.max_err < 1e-4);
    CHECK(r.err_lc < 1e-4);
    CHECK(r.err_ld < 1e-4);
    CHECK(r.err_lnd < 1e-4);
    CHECK(r.err_lnc < 1e-4);
    CHECK(r.err_total < 1e-4);
  }
}

TEST_CASE("gradient check works without output normalization too") {
  GradCheckConfig cfg;
  cfg.head.normalize_output = false;
  cfg.seed = 7;
  CHECK(run_gradcheck(cfg).max_err < 1e-4);
}

TEST_CASE("corrupted gradients are caught (negative control)") {
  GradCheckConfig cfg;
  cfg.corrupt = true;
  CHECK(run_gradcheck(cfg).max_err > 1e-4);
}

TEST_CASE("backward reports the same breakdown as the forward pass") {
  GradCheckConfig gc;
  BatchEmbeddings batch;
  Rng rng(12);
  AcxHeadConfig cfg{8, 6, 4, true};
  AcxHeadParams p = AcxHeadParams::init(cfg, 3);
  for (int i = 0; i < 3; ++i) {
    auto draw = [&]() {
      Embedding e;
      for (int k = 0; k < 8; ++k) e.values.push_back(rng.normal());
      return e;
    };
    batch.anchors.push_back(draw());
    batch.positives.push_back(draw());
    batch.hards.push_back(draw());
  }
  std::vector<double> grad;
  LossBreakdown lb = head_backward(p, batch, grad);
  LossBreakdown fwd = loss_total(project_batch(p, batch));
  CHECK(lb.total == doctest::Approx(fwd.total).epsilon(1e-12));
  CHECK(grad.size() == p.flat.size());
  bool any = false;
  for (double g : grad)
    if (g != 0.0) any = true;
  CHECK(any);
}
