// acx/evalsim.cpp
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

#include "acx/evalsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "acx/errors.hpp"
#include "acx/head.hpp"
#include "acx/parallel.hpp"

namespace acx {

namespace {

struct SweepPoint {
  std::string label;
  DistortionSpec constraint;  // the single controlled factor
};

SweepResult run_sweep(const std::vector<SweepPoint>& points,
                      const Representation& model, const SweepContext& ctx,
                      std::uint64_t seed, int n_per_point,
                      const std::string& tag) {
  if (n_per_point < 1)
    throw ConfigError("sweep: n_per_point must be >= 1");
  if (ctx.pool.ids().size() < 2)
    throw ConfigError("sweep: utterance pool too small");

  const std::size_t num_points = points.size();
  std::vector<std::vector<double>> pos_vals(num_points,
                                            std::vector<double>(n_per_point));
  std::vector<std::vector<double>> clean_vals(num_points,
                                              std::vector<double>(n_per_point));

  parallel_for(num_points * static_cast<std::size_t>(n_per_point),
               [&](std::size_t idx) {
    const std::size_t pt = idx / n_per_point;
    const std::size_t k = idx % n_per_point;
    Rng rng(mix_seed(seed, fnv1a(points[pt].label), k));

    // The triple: anchor utterance, a different positive utterance, and the
    // anchor's clean rendition; anchor and positive share the exact spec.
    const auto& ids = ctx.pool.ids();
    std::size_t ia = rng.uniform_index(ids.size());
    std::size_t ip = rng.uniform_index(ids.size() - 1);
    if (ip >= ia) ++ip;

    DistortionSpec spec = points[pt].constraint;
    if (spec.snr_db && !spec.noise_id) {
      spec.noise_id =
          ctx.assets.noise_ids()[rng.uniform_index(ctx.assets.noise_ids().size())];
    }
    if (spec.room_size && !spec.rir_id) {
      const auto& pool = ctx.assets.rir_ids(*spec.room_size);
      spec.rir_id = pool[rng.uniform_index(pool.size())];
    }

    AudioBuffer clean_a = ctx.pool.get(ids[ia]);
    AudioBuffer clean_p = ctx.pool.get(ids[ip]);
    Embedding r_anchor =
        model(ctx.encoder.encode(apply_spec(clean_a, spec, ctx.assets)));
    Embedding r_positive =
        model(ctx.encoder.encode(apply_spec(clean_p, spec, ctx.assets)));
    Embedding r_clean = model(ctx.encoder.encode(clean_a));

    pos_vals[pt][k] = cos_sim(r_anchor, r_positive);
    clean_vals[pt][k] = cos_sim(r_anchor, r_clean);
  });

  SweepResult out;
  out.representation_tag = tag;
  out.n_per_point = n_per_point;
  for (std::size_t pt = 0; pt < num_points; ++pt) {
    out.axis.push_back(points[pt].label);
    // Fixed summation order, independent of worker count.
    double sp = 0.0, sc = 0.0;
    for (int k = 0; k < n_per_point; ++k) {
      sp += pos_vals[pt][k];
      sc += clean_vals[pt][k];
    }
    out.mean_sim_positive.push_back(sp / n_per_point);
    out.mean_sim_clean.push_back(sc / n_per_point);
  }
  return out;
}

}  // namespace

SweepResult run_noise_sweep(const Representation& model, const SweepContext& ctx,
                            std::uint64_t seed, int n_per_point,
                            const std::string& tag) {
  std::vector<SweepPoint> points;
  for (int snr = 0; snr <= 30; ++snr) {
    SweepPoint p;
    p.label = std::to_string(snr);
    p.constraint.snr_db = static_cast<double>(snr);
    points.push_back(std::move(p));
  }
  return run_sweep(points, model, ctx, seed, n_per_point, tag);
}

SweepResult run_reverb_sweep(const Representation& model,
                             const SweepContext& ctx, std::uint64_t seed,
                             int n_per_point, const std::string& tag) {
  std::vector<SweepPoint> points;
  for (RoomSize room : {RoomSize::kLarge, RoomSize::kMedium, RoomSize::kSmall}) {
    SweepPoint p;
    p.label = room_size_name(room);
    p.constraint.room_size = room;
    points.push_back(std::move(p));
  }
  return run_sweep(points, model, ctx, seed, n_per_point, tag);
}

SweepResult run_bandwidth_sweep(const Representation& model,
                                const SweepContext& ctx, std::uint64_t seed,
                                int n_per_point, const std::string& tag) {
  std::vector<SweepPoint> points;
  for (int khz = 1; khz <= 8; ++khz) {
    SweepPoint p;
    p.label = std::to_string(khz * 1000);
    p.constraint.cutoff_hz = static_cast<double>(khz * 1000);
    points.push_back(std::move(p));
  }
  return run_sweep(points, model, ctx, seed, n_per_point, tag);
}

void emit_csv(const SweepResult& result, const std::string& path) {
  if (result.axis.empty()) throw ParamError("emit_csv: empty sweep");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write CSV: " + path);
  os << "axis,mean_sim_positive,mean_sim_clean,n\n";
  for (std::size_t i = 0; i < result.axis.size(); ++i) {
    std::ostringstream row;
    row.precision(9);
    row << result.axis[i] << ',' << result.mean_sim_positive[i] << ','
        << result.mean_sim_clean[i] << ',' << result.n_per_point;
    os << row.str() << '\n';
  }
  if (!os) throw IoError("CSV write failed: " + path);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ParamError("spearman: need equal-length inputs, n >= 2");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= rx.size();
  my /= ry.size();
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) return 0.0;
  return num / std::sqrt(dx * dy);
}

}  // namespace acx
