// acx/dsp.cpp
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

#include "acx/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "acx/errors.hpp"
#include "acx/fft.hpp"
#include "acx/parallel.hpp"
#include "acx/rng.hpp"

namespace acx {

namespace {

double sinc(double x) {
  if (std::fabs(x) < 1e-12) return 1.0;
  double px = M_PI * x;
  return std::sin(px) / px;
}

// Blackman window on [-1, 1].
double blackman(double x) {
  if (std::fabs(x) > 1.0) return 0.0;
  return 0.42 + 0.5 * std::cos(M_PI * x) + 0.08 * std::cos(2.0 * M_PI * x);
}

double resample_sample(const std::vector<double>& x, double ratio,
                       std::size_t j) {
  // Kernel in input-sample units; cutoff at the lower of the two Nyquists.
  const double scale = std::min(1.0, ratio);
  const double half_width = 32.0 / scale;
  const double tc = static_cast<double>(j) / ratio;
  const long k_lo = static_cast<long>(std::ceil(tc - half_width));
  const long k_hi = static_cast<long>(std::floor(tc + half_width));
  double acc = 0.0;
  const long n = static_cast<long>(x.size());
  for (long k = std::max(0L, k_lo); k <= std::min(n - 1, k_hi); ++k) {
    double t = tc - static_cast<double>(k);
    acc += x[k] * scale * sinc(scale * t) * blackman(t / half_width);
  }
  return acc;
}

}  // namespace

namespace kernels {

std::vector<double> fir_convolve_serial(const std::vector<double>& x,
                                        const std::vector<double>& taps) {
  const long n = static_cast<long>(x.size());
  const long m = static_cast<long>(taps.size());
  const long delay = (m - 1) / 2;
  std::vector<double> out(x.size());
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = 0; k < m; ++k) {
      long idx = i + delay - k;
      if (idx >= 0 && idx < n) acc += taps[k] * x[idx];
    }
    out[i] = acc;
  }
  return out;
}

std::vector<double> fir_convolve_parallel(const std::vector<double>& x,
                                          const std::vector<double>& taps) {
  const long n = static_cast<long>(x.size());
  const long m = static_cast<long>(taps.size());
  const long delay = (m - 1) / 2;
  std::vector<double> out(x.size());
  parallel_for(x.size(), [&](std::size_t ui) {
    const long i = static_cast<long>(ui);
    double acc = 0.0;
    for (long k = 0; k < m; ++k) {
      long idx = i + delay - k;
      if (idx >= 0 && idx < n) acc += taps[k] * x[idx];
    }
    out[ui] = acc;
  });
  return out;
}

std::vector<double> resample_serial(const std::vector<double>& x, double ratio,
                                    std::size_t out_len) {
  std::vector<double> out(out_len);
  for (std::size_t j = 0; j < out_len; ++j)
    out[j] = resample_sample(x, ratio, j);
  return out;
}

std::vector<double> resample_parallel(const std::vector<double>& x,
                                      double ratio, std::size_t out_len) {
  std::vector<double> out(out_len);
  parallel_for(out_len,
               [&](std::size_t j) { out[j] = resample_sample(x, ratio, j); });
  return out;
}

}  // namespace kernels

double mean_square_power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

AudioBuffer mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise,
                       double snr_db, std::size_t noise_offset) {
  if (speech.sample_rate_hz != noise.sample_rate_hz)
    throw ParamError("mix_at_snr: sample rates differ");
  const std::size_t n = speech.samples.size();
  if (noise.samples.size() < noise_offset + n)
    throw ParamError("mix_at_snr: noise too short for requested offset");

  const double p_speech = mean_square_power(speech.samples);
  if (p_speech <= 0.0)
    throw DegenerateInputError("mix_at_snr: zero-power speech");
  std::vector<double> noise_crop(noise.samples.begin() + noise_offset,
                                 noise.samples.begin() + noise_offset + n);
  const double p_noise = mean_square_power(noise_crop);
  if (p_noise <= 0.0) throw DegenerateInputError("mix_at_snr: zero-power noise");

  const double g = std::sqrt(p_speech / p_noise) * std::pow(10.0, -snr_db / 20.0);
  AudioBuffer out;
  out.sample_rate_hz = speech.sample_rate_hz;
  out.samples.resize(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = speech.samples[i] + g * noise_crop[i];
    peak = std::max(peak, std::fabs(out.samples[i]));
  }
  if (peak > 1.0) {
    const double s = 0.99 / peak;
    for (double& v : out.samples) v *= s;
  }
  return out;
}

FirFilter design_lowpass(double cutoff_hz, int sample_rate_hz, int num_taps) {
  if (cutoff_hz <= 0.0 || cutoff_hz >= sample_rate_hz / 2.0)
    throw ParamError("design_lowpass: cutoff must be in (0, Nyquist)");
  if (num_taps < 1 || num_taps % 2 == 0)
    throw ParamError("design_lowpass: num_taps must be odd and positive");

  FirFilter f;
  f.taps.resize(num_taps);
  const double fc = cutoff_hz / sample_rate_hz;  // normalized, cycles/sample
  const int mid = (num_taps - 1) / 2;
  for (int i = 0; i < num_taps; ++i) {
    double t = static_cast<double>(i - mid);
    double w = 0.54 + 0.46 * std::cos(M_PI * t / (mid == 0 ? 1.0 : mid));
    f.taps[i] = 2.0 * fc * sinc(2.0 * fc * t) * w;
  }
  // Exact unity DC gain.
  double sum = 0.0;
  for (double t : f.taps) sum += t;
  for (double& t : f.taps) t /= sum;
  f.description = "lowpass fc=" + std::to_string(cutoff_hz) + "Hz taps=" +
                  std::to_string(num_taps) + " hamming";
  return f;
}

AudioBuffer apply_fir(const AudioBuffer& signal, const FirFilter& filter) {
  if (filter.taps.empty()) throw ParamError("apply_fir: empty filter");
  AudioBuffer out;
  out.sample_rate_hz = signal.sample_rate_hz;
  out.samples = kernels::fir_convolve_parallel(signal.samples, filter.taps);
  return out;
}

AudioBuffer resample(const AudioBuffer& signal, int target_rate_hz) {
  if (signal.sample_rate_hz <= 0 || target_rate_hz <= 0)
    throw ParamError("resample: rates must be positive");
  if (target_rate_hz == signal.sample_rate_hz) return signal;
  const double ratio =
      static_cast<double>(target_rate_hz) / signal.sample_rate_hz;
  const std::size_t out_len = static_cast<std::size_t>(
      std::lround(static_cast<double>(signal.samples.size()) * ratio));
  AudioBuffer out;
  out.sample_rate_hz = target_rate_hz;
  out.samples = kernels::resample_parallel(signal.samples, ratio, out_len);
  return out;
}

AudioBuffer apply_rir(const AudioBuffer& speech, const AudioBuffer& rir) {
  if (speech.sample_rate_hz != rir.sample_rate_hz)
    throw ParamError("apply_rir: sample rates differ");
  if (rir.samples.empty()) throw ParamError("apply_rir: empty RIR");
  std::size_t peak_idx = 0;
  double peak_val = 0.0;
  for (std::size_t i = 0; i < rir.samples.size(); ++i) {
    double a = std::fabs(rir.samples[i]);
    if (a > peak_val) {
      peak_val = a;
      peak_idx = i;
    }
  }
  if (peak_val == 0.0) throw DegenerateInputError("apply_rir: all-zero RIR");

  std::vector<double> full = fft_convolve(speech.samples, rir.samples);
  AudioBuffer out;
  out.sample_rate_hz = speech.sample_rate_hz;
  out.samples.resize(speech.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    std::size_t src = i + peak_idx;
    out.samples[i] = src < full.size() ? full[src] : 0.0;
  }
  const double in_peak = peak_abs(speech);
  const double out_peak = peak_abs(out);
  if (in_peak > 0.0 && out_peak > 0.0) {
    const double g = in_peak / out_peak;
    for (double& v : out.samples) v *= g;
  }
  return out;
}

AudioBuffer clip_amplitude(const AudioBuffer& signal, double clip_factor) {
  if (clip_factor < 0.0 || clip_factor > 0.5)
    throw ParamError("clip_amplitude: clip_factor outside [0, 0.5]");
  if (clip_factor == 0.0) return signal;
  const double t = (1.0 - clip_factor) * peak_abs(signal);
  AudioBuffer out;
  out.sample_rate_hz = signal.sample_rate_hz;
  out.samples.resize(signal.samples.size());
  for (std::size_t i = 0; i < signal.samples.size(); ++i)
    out.samples[i] = std::clamp(signal.samples[i], -t, t);
  return out;
}

std::string room_size_name(RoomSize rs) {
  switch (rs) {
    case RoomSize::kSmall: return "small";
    case RoomSize::kMedium: return "medium";
    case RoomSize::kLarge: return "large";
  }
  return "unknown";
}

RoomSize room_size_from_name(const std::string& name) {
  if (name == "small") return RoomSize::kSmall;
  if (name == "medium") return RoomSize::kMedium;
  if (name == "large") return RoomSize::kLarge;
  throw ParamError("unknown room size: " + name);
}

AudioBuffer synth_rir(std::uint64_t seed, RoomSize room_size,
                      int sample_rate_hz) {
  double t60_target = 0.0;
  switch (room_size) {
    case RoomSize::kSmall: t60_target = 0.15; break;
    case RoomSize::kMedium: t60_target = 0.5; break;
    case RoomSize::kLarge: t60_target = 1.0; break;
  }
  Rng rng(mix_seed(0x11125ee0ULL, seed, static_cast<std::uint64_t>(room_size)));
  const double t60 = t60_target * rng.uniform(0.8, 1.2);
  const std::size_t n = static_cast<std::size_t>(
      std::lround((1.4 * t60 + 0.05) * sample_rate_hz));
  AudioBuffer rir;
  rir.sample_rate_hz = sample_rate_hz;
  rir.samples.resize(n);
  // -60 dB amplitude decay over t60 seconds.
  const double decay = std::log(1000.0) / t60;
  rir.samples[0] = 2.0;  // direct path, guaranteed argmax
  for (std::size_t i = 1; i < n; ++i) {
    double t = static_cast<double>(i) / sample_rate_hz;
    rir.samples[i] = 0.25 * rng.normal() * std::exp(-decay * t);
  }
  return rir;
}

AudioBuffer synth_noise(std::uint64_t seed, double duration_s,
                        int sample_rate_hz) {
  if (duration_s <= 0.0) throw ParamError("duration_s must be positive");
  Rng rng(mix_seed(0x5e15e0ULL, seed));
  const std::size_t n = static_cast<std::size_t>(
      std::lround(duration_s * sample_rate_hz));
  AudioBuffer out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.resize(std::max<std::size_t>(n, 1));
  // One-pole colored noise; tilt and modulation give each seed a distinct
  // texture standing in for a noise "type".
  const double a = rng.uniform(0.0, 0.95);
  const double mod_hz = rng.uniform(0.0, 3.0);
  const double mod_depth = rng.uniform(0.0, 0.5);
  double y = 0.0;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    double t = static_cast<double>(i) / sample_rate_hz;
    y = a * y + (1.0 - a) * rng.normal();
    double env = 1.0 + mod_depth * std::sin(2.0 * M_PI * mod_hz * t);
    out.samples[i] = env * y;
  }
  double p = peak_abs(out);
  if (p > 0.0) {
    double g = 0.9 / p;
    for (double& v : out.samples) v *= g;
  }
  return out;
}

}  // namespace acx
