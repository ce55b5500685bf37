#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "acx/errors.hpp"
#include "acx/train.hpp"

using namespace acx;

namespace {

struct Toy {
  UtterancePool pool;
  AssetResolver assets;
  MelStatEncoder encoder;
  std::vector<Quadruplet> quads;

  static EncoderConfig encoder_config() {
    EncoderConfig c;
    c.dim = 48;
    c.num_mel_bands = 24;
    return c;
  }

  explicit Toy(int n_quads)
      : pool(1, 8, 0.4, 16000),
        assets(16000, 3, 2),
        encoder(encoder_config()) {
    Rng rng(3);
    for (int i = 0; i < n_quads; ++i)
      quads.push_back(make_quadruplet(rng, pool.ids(), assets));
  }

  AcxHeadConfig head_config() const { return AcxHeadConfig{48, 24, 16, true}; }

  TrainConfig train_config(int steps) const {
    TrainConfig t;
    t.batch_size = 3;
    t.steps = steps;
    t.seed = 11;
    return t;
  }
};

}  // namespace

TEST_CASE("adam matches a reference implementation") {
  AdamConfig cfg;
  AdamOptimizer opt(3, cfg);
  std::vector<double> params = {1.0, -2.0, 0.5};
  std::vector<double> ref = params;
  std::vector<double> m(3, 0.0), v(3, 0.0);
  Rng rng(1);
  for (int t = 1; t <= 25; ++t) {
    std::vector<double> grad = {rng.normal(), rng.normal(), rng.normal()};
    opt.step(params, grad);
    for (int i = 0; i < 3; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mh = m[i] / (1.0 - std::pow(cfg.beta1, t));
      const double vh = v[i] / (1.0 - std::pow(cfg.beta2, t));
      ref[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
    for (int i = 0; i < 3; ++i)
      CHECK(params[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  CHECK(opt.step_count() == 25);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  AcxHeadConfig cfg{6, 5, 4, true};
  Checkpoint cp;
  cp.params = AcxHeadParams::init(cfg, 2);
  cp.step = 123;
  cp.train_seed = 77;
  cp.adam_t = 123;
  Rng rng(5);
  for (std::size_t i = 0; i < cp.params.flat.size(); ++i) {
    cp.adam_m.push_back(rng.normal());
    cp.adam_v.push_back(std::abs(rng.normal()));
  }
  const std::string path = "acx_test_ckpt.bin";
  write_checkpoint(cp, path);
  Checkpoint back = read_checkpoint(path);
  CHECK(back.params.flat == cp.params.flat);
  CHECK(back.params.cfg.dim_in == cfg.dim_in);
  CHECK(back.params.cfg.hidden == cfg.hidden);
  CHECK(back.params.cfg.dim_out == cfg.dim_out);
  CHECK(back.params.cfg.normalize_output == cfg.normalize_output);
  CHECK(back.step == cp.step);
  CHECK(back.train_seed == cp.train_seed);
  CHECK(back.adam_t == cp.adam_t);
  CHECK(back.adam_m == cp.adam_m);
  CHECK(back.adam_v == cp.adam_v);
  std::remove(path.c_str());

  {
    std::ofstream f(path, std::ios::binary);
    f << "junk";
  }
  CHECK_THROWS_AS(read_checkpoint(path), FormatError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_checkpoint("acx_test_no_such_ckpt.bin"), IoError);
}

TEST_CASE("embedding cache is consistent with direct encoding") {
  Toy toy(6);
  EmbeddingCache cache(toy.pool, toy.assets, toy.encoder);
  cache.precompute(toy.quads);
  const QuadItem& item = toy.quads[0].anchor;
  Embedding direct = toy.encoder.encode(
      apply_spec(toy.pool.get(item.utterance_id), item.spec, toy.assets));
  CHECK(cache.degraded(item).values == direct.values);
  Embedding clean_direct =
      toy.encoder.encode(toy.pool.get(item.utterance_id));
  CHECK(cache.clean(item.utterance_id).values == clean_direct.values);
}

TEST_CASE("training runs are deterministic") {
  Toy toy(12);
  EmbeddingCache cache(toy.pool, toy.assets, toy.encoder);
  cache.precompute(toy.quads);
  std::vector<StepRecord> rec_a, rec_b;
  Checkpoint a = train(toy.train_config(8), toy.head_config(), toy.quads,
                       cache, toy.encoder, nullptr, &rec_a);
  Checkpoint b = train(toy.train_config(8), toy.head_config(), toy.quads,
                       cache, toy.encoder, nullptr, &rec_b);
  CHECK(a.params.flat == b.params.flat);
  REQUIRE(rec_a.size() == 8);
  for (std::size_t i = 0; i < rec_a.size(); ++i)
    CHECK(rec_a[i].loss.total == rec_b[i].loss.total);
}

TEST_CASE("resume from checkpoint reproduces the uninterrupted trajectory") {
  Toy toy(12);
  EmbeddingCache cache(toy.pool, toy.assets, toy.encoder);
  cache.precompute(toy.quads);

  std::vector<StepRecord> full;
  Checkpoint straight = train(toy.train_config(10), toy.head_config(),
                              toy.quads, cache, toy.encoder, nullptr, &full);

  Checkpoint half = train(toy.train_config(5), toy.head_config(), toy.quads,
                          cache, toy.encoder);
  std::vector<StepRecord> tail;
  Checkpoint resumed = train(toy.train_config(10), toy.head_config(),
                             toy.quads, cache, toy.encoder, &half, &tail);

  CHECK(resumed.params.flat == straight.params.flat);
  CHECK(resumed.step == straight.step);
  CHECK(resumed.adam_m == straight.adam_m);
  CHECK(resumed.adam_v == straight.adam_v);
  REQUIRE(tail.size() == 5);
  for (std::size_t i = 0; i < tail.size(); ++i)
    CHECK(tail[i].loss.total == full[i + 5].loss.total);
}

TEST_CASE("metrics csv has a header and one row per step") {
  Toy toy(8);
  EmbeddingCache cache(toy.pool, toy.assets, toy.encoder);
  cache.precompute(toy.quads);
  std::vector<StepRecord> rec;
  train(toy.train_config(6), toy.head_config(), toy.quads, cache, toy.encoder,
        nullptr, &rec);
  const std::string path = "acx_test_metrics.csv";
  write_metrics_csv(rec, path);
  std::ifstream f(path);
  std::string line;
  REQUIRE(std::getline(f, line));
  CHECK(line == "step,l_c,l_d,l_nd,l_nc,total,p_max");
  int rows = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream ss(line);
    std::string field;
    int fields = 0;
    while (std::getline(ss, field, ',')) ++fields;
    CHECK(fields == 7);
  }
  CHECK(rows == 6);
  std::remove(path.c_str());
}

TEST_CASE("500 toy steps cut the smoothed loss by at least 30 percent") {
  // Two-intensity toy task: clean-ish vs harsh conditions over a small pool.
  Toy toy(48);
  EmbeddingCache cache(toy.pool, toy.assets, toy.encoder);
  cache.precompute(toy.quads);
  TrainConfig tc = toy.train_config(500);
  std::vector<StepRecord> rec;
  train(tc, toy.head_config(), toy.quads, cache, toy.encoder, nullptr, &rec);
  REQUIRE(rec.size() == 500);
  auto window_mean = [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += rec[i].loss.total;
    return acc / (hi - lo);
  };
  // L_nd makes totals negative; compare against the loss floor so the ratio
  // is meaningful. Initial: first 5 steps; final: last 25 steps smoothed.
  const double first = window_mean(0, 5);
  const double last = window_mean(475, 500);
  CHECK(last < first);
  const double floor_offset =
      -2.0 * (2.0 * tc.batch_size * tc.batch_size);  // L_nd lower bound
  const double drop = (first - last) / (first - floor_offset);
  CHECK(drop >= 0.30);
}

TEST_CASE("training checks batch spec distinctness") {
  Toy toy(3);
  // Duplicate every quadruplet so distinct-spec batches are impossible.
  auto quads = toy.quads;
  quads.push_back(quads[0]);
  quads[0] = quads[1];
  quads[2] = quads[1];
  quads[3] = quads[1];
  EmbeddingCache cache(toy.pool, toy.assets, toy.encoder);
  cache.precompute(quads);
  CHECK_THROWS_AS(train(toy.train_config(2), toy.head_config(), quads, cache,
                        toy.encoder),
                  ConfigError);
}
