// acx/encoder.cpp
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

#include "acx/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "acx/errors.hpp"
#include "acx/dsp.hpp"
#include "acx/fft.hpp"
#include "acx/rng.hpp"

namespace acx {

namespace {

constexpr double kLogFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

double percentile(std::vector<double> sorted, double q) {
  // sorted must be ascending; linear interpolation between ranks.
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    unsigned char b = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<char*>(&b), 1);
  }
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    unsigned char b = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<char*>(&b), 1);
  }
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    unsigned char b;
    is.read(reinterpret_cast<char*>(&b), 1);
    v |= static_cast<std::uint32_t>(b) << (8 * i);
  }
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    unsigned char b;
    is.read(reinterpret_cast<char*>(&b), 1);
    v |= static_cast<std::uint64_t>(b) << (8 * i);
  }
  return v;
}

}  // namespace

MelStatEncoder::MelStatEncoder(const EncoderConfig& config) : config_(config) {
  const int win = static_cast<int>(
      std::lround(config.window_ms * 1e-3 * config.sample_rate_hz));
  fft_size_ = next_pow2(static_cast<std::size_t>(win));
  window_.resize(win);
  for (int i = 0; i < win; ++i)
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1));

  // Triangular mel filterbank over [0, Nyquist].
  const int num_bins = static_cast<int>(fft_size_ / 2 + 1);
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(config.sample_rate_hz / 2.0);
  std::vector<double> centers(config.num_mel_bands + 2);
  for (int m = 0; m < config.num_mel_bands + 2; ++m)
    centers[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m /
                           (config.num_mel_bands + 1));
  mel_filters_.assign(config.num_mel_bands, std::vector<double>(num_bins, 0.0));
  for (int m = 0; m < config.num_mel_bands; ++m) {
    double f_lo = centers[m], f_c = centers[m + 1], f_hi = centers[m + 2];
    for (int b = 0; b < num_bins; ++b) {
      double f = static_cast<double>(b) * config.sample_rate_hz /
                 static_cast<double>(fft_size_);
      if (f > f_lo && f < f_c)
        mel_filters_[m][b] = (f - f_lo) / (f_c - f_lo);
      else if (f >= f_c && f < f_hi)
        mel_filters_[m][b] = (f_hi - f) / (f_hi - f_c);
    }
  }

  // Seeded Gaussian projection, frozen by construction.
  const int num_features = 4 * config.num_mel_bands;
  Rng rng(mix_seed(0xe27c0de2ULL, config.seed));
  projection_.assign(config.dim, std::vector<double>(num_features));
  const double scale = 1.0 / std::sqrt(static_cast<double>(num_features));
  for (int i = 0; i < config.dim; ++i)
    for (int j = 0; j < num_features; ++j)
      projection_[i][j] = scale * rng.normal();
}

std::vector<double> MelStatEncoder::mel_stats(const AudioBuffer& signal) const {
  const int win = static_cast<int>(window_.size());
  const int hop = static_cast<int>(
      std::lround(config_.hop_ms * 1e-3 * config_.sample_rate_hz));
  const long n = static_cast<long>(signal.samples.size());
  const long num_frames = n < win ? 0 : 1 + (n - win) / hop;
  if (num_frames < 2)
    throw ParamError("encode: signal too short");

  double gain = 1.0;
  if (config_.gain_normalize) {
    double rms = std::sqrt(mean_square_power(signal.samples));
    if (rms > 0.0) gain = 0.1 / rms;
  }

  const int bands = config_.num_mel_bands;
  std::vector<std::vector<double>> log_mel(bands,
                                           std::vector<double>(num_frames));
  std::vector<double> frame(win);
  for (long f = 0; f < num_frames; ++f) {
    for (int i = 0; i < win; ++i)
      frame[i] = gain * signal.samples[f * hop + i] * window_[i];
    std::vector<double> mag = magnitude_spectrum(frame, fft_size_);
    for (int m = 0; m < bands; ++m) {
      double e = 0.0;
      const auto& filt = mel_filters_[m];
      for (std::size_t b = 0; b < mag.size(); ++b)
        e += filt[b] * mag[b] * mag[b];
      log_mel[m][f] = std::log(std::max(e, kLogFloor));
    }
  }

  std::vector<double> feats;
  feats.reserve(4 * bands);
  for (int m = 0; m < bands; ++m) {
    const auto& row = log_mel[m];
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= row.size();
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= row.size();
    std::vector<double> sorted = row;
    std::sort(sorted.begin(), sorted.end());
    feats.push_back(mean);
    feats.push_back(std::sqrt(var));
    feats.push_back(percentile(sorted, 0.10));
    feats.push_back(percentile(sorted, 0.90));
  }
  return feats;
}

Embedding MelStatEncoder::encode(const AudioBuffer& signal) const {
  if (signal.duration_s() < 0.2)
    throw ParamError("encode: signal shorter than 0.2 s");
  std::vector<double> feats = mel_stats(signal);
  Embedding e;
  e.values.resize(config_.dim);
  for (int i = 0; i < config_.dim; ++i) {
    double acc = 0.0;
    const auto& row = projection_[i];
    for (std::size_t j = 0; j < feats.size(); ++j) acc += row[j] * feats[j];
    e.values[i] = acc;
  }
  return e;
}

std::uint64_t MelStatEncoder::params_checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& row : projection_)
    mix_bytes(row.data(), row.size() * sizeof(double));
  for (const auto& row : mel_filters_)
    mix_bytes(row.data(), row.size() * sizeof(double));
  mix_bytes(window_.data(), window_.size() * sizeof(double));
  return h;
}

void write_embeddings(const std::vector<std::pair<std::string, Embedding>>& rows,
                      const std::string& path) {
  std::size_t dim = rows.empty() ? 0 : rows.front().second.dim();
  for (const auto& [id, e] : rows)
    if (e.dim() != dim)
      throw FormatError("write_embeddings: inconsistent dims");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write embeddings: " + path);
  os.write("ACXE", 4);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(dim));
  put_u64(os, rows.size());
  for (const auto& [id, e] : rows) {
    if (id.size() > 0xffff) throw FormatError("embedding id too long: " + id);
    put_u16(os, static_cast<std::uint16_t>(id.size()));
    os.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (double v : e.values) {
      float f = static_cast<float>(v);
      static_assert(sizeof(float) == 4);
      unsigned char b[4];
      std::memcpy(b, &f, 4);
      os.write(reinterpret_cast<char*>(b), 4);
    }
  }
  if (!os) throw IoError("embedding write failed: " + path);
}

std::map<std::string, Embedding> load_embeddings(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read embeddings: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "ACXE", 4) != 0)
    throw FormatError("bad embedding container magic: " + path);
  std::uint32_t version = get_u32(is);
  if (version != 1)
    throw FormatError("unsupported embedding container version");
  std::uint32_t dim = get_u32(is);
  std::uint64_t count = get_u64(is);
  std::map<std::string, Embedding> out;
  for (std::uint64_t r = 0; r < count; ++r) {
    std::uint16_t id_len = get_u16(is);
    std::string id(id_len, '\0');
    is.read(id.data(), id_len);
    Embedding e;
    e.values.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      unsigned char b[4];
      is.read(reinterpret_cast<char*>(b), 4);
      float f;
      std::memcpy(&f, b, 4);
      e.values[i] = f;
    }
    if (!is) throw FormatError("truncated embedding container: " + path);
    if (!out.emplace(id, std::move(e)).second)
      throw FormatError("duplicate embedding id: " + id);
  }
  return out;
}

}  // namespace acx
