#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "acx/encoder.hpp"
#include "acx/errors.hpp"
#include "acx/head.hpp"
#include "acx/scenario.hpp"

using namespace acx;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.dim = 64;
  c.num_mel_bands = 32;
  return c;
}

}  // namespace

TEST_CASE("encoder is deterministic and emits finite fixed-dim vectors") {
  MelStatEncoder enc(small_config());
  AudioBuffer u = synth_utterance(1, 1.0, 16000);
  Embedding a = enc.encode(u);
  Embedding b = enc.encode(u);
  REQUIRE(a.dim() == 64);
  CHECK(a.values == b.values);
  for (double v : a.values) CHECK(std::isfinite(v));

  MelStatEncoder enc2(small_config());
  CHECK(enc2.encode(u).values == a.values);
}

TEST_CASE("different seeds give different frozen parameters") {
  EncoderConfig c1 = small_config();
  EncoderConfig c2 = small_config();
  c2.seed = 999;
  MelStatEncoder e1(c1), e2(c2);
  CHECK(e1.params_checksum() != e2.params_checksum());
  AudioBuffer u = synth_utterance(2, 0.5, 16000);
  CHECK(e1.encode(u).values != e2.encode(u).values);
}

TEST_CASE("params_checksum is stable across instances") {
  MelStatEncoder a(small_config()), b(small_config());
  CHECK(a.params_checksum() == b.params_checksum());
}

TEST_CASE("encode rejects too-short input") {
  MelStatEncoder enc(small_config());
  AudioBuffer tiny;
  tiny.sample_rate_hz = 16000;
  tiny.samples.assign(1600, 0.1);  // 0.1 s
  CHECK_THROWS_AS(enc.encode(tiny), ParamError);
}

TEST_CASE("silence encodes without blowing up") {
  MelStatEncoder enc(small_config());
  AudioBuffer silence;
  silence.sample_rate_hz = 16000;
  silence.samples.assign(16000, 0.0);
  Embedding e = enc.encode(silence);
  for (double v : e.values) CHECK(std::isfinite(v));
}

TEST_CASE("degraded signals move away from clean in embedding space") {
  MelStatEncoder enc(small_config());
  AssetResolver assets(16000, 4, 3);
  AudioBuffer clean = synth_utterance(3, 1.0, 16000);
  Embedding e_clean = enc.encode(clean);

  DistortionSpec harsh;
  harsh.noise_id = "synth:0";
  harsh.snr_db = -5.0;
  Embedding e_harsh = enc.encode(apply_spec(clean, harsh, assets));

  DistortionSpec mild = harsh;
  mild.snr_db = 20.0;
  Embedding e_mild = enc.encode(apply_spec(clean, mild, assets));

  const double s_harsh = cos_sim(e_clean, e_harsh);
  const double s_mild = cos_sim(e_clean, e_mild);
  CHECK(s_mild > s_harsh);
  CHECK(s_mild < 1.0);
  CHECK(cos_sim(e_clean, e_clean) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("embedding container round trip") {
  std::vector<std::pair<std::string, Embedding>> rows;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    Embedding e;
    for (int k = 0; k < 16; ++k) e.values.push_back(rng.normal());
    rows.emplace_back("row" + std::to_string(i), e);
  }
  const std::string path = "acx_test_embeddings.bin";
  write_embeddings(rows, path);
  auto back = load_embeddings(path);
  REQUIRE(back.size() == rows.size());
  for (const auto& [id, e] : rows) {
    REQUIRE(back.count(id) == 1);
    REQUIRE(back[id].dim() == e.dim());
    for (std::size_t k = 0; k < e.dim(); ++k)
      CHECK(back[id].values[k] ==
            doctest::Approx(e.values[k]).epsilon(1e-6));  // f32 storage
  }
  std::remove(path.c_str());
}

TEST_CASE("container rejects mixed dims, duplicate ids and bad files") {
  Embedding a, b;
  a.values = {1.0, 2.0};
  b.values = {1.0, 2.0, 3.0};
  const std::string path = "acx_test_embeddings_bad.bin";
  CHECK_THROWS_AS(write_embeddings({{"a", a}, {"b", b}}, path), FormatError);

  write_embeddings({{"a", a}, {"a", a}}, path);
  CHECK_THROWS_AS(load_embeddings(path), FormatError);
  std::remove(path.c_str());

  {
    FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("XXXX", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_embeddings(path), FormatError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_embeddings("acx_test_missing.bin"), IoError);
}

TEST_CASE("empty container round trips") {
  const std::string path = "acx_test_embeddings_empty.bin";
  write_embeddings({}, path);
  CHECK(load_embeddings(path).empty());
  std::remove(path.c_str());
}

TEST_CASE("level sensitivity is on by default") {
  MelStatEncoder enc(small_config());
  AudioBuffer u = synth_utterance(4, 0.5, 16000);
  AudioBuffer quiet = u;
  for (auto& v : quiet.samples) v *= 0.1;
  Embedding a = enc.encode(u), b = enc.encode(quiet);
  CHECK(a.values != b.values);
}
