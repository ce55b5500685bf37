// acx/audio.cpp
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

#include "acx/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "acx/errors.hpp"
#include "acx/rng.hpp"

namespace acx {

namespace {

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open WAV file: " + path);

  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0)
    throw FormatError("not a RIFF file: " + path);
  read_u32(is);  // riff size, unused
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0)
    throw FormatError("not a WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<char> data;
  bool have_data = false;

  while (is.read(tag, 4)) {
    std::uint32_t chunk_size = read_u32(is);
    if (!is) throw FormatError("truncated chunk header: " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("short fmt chunk: " + path);
      format = read_u16(is);
      channels = read_u16(is);
      rate = read_u32(is);
      read_u32(is);  // byte rate
      read_u16(is);  // block align
      bits = read_u16(is);
      is.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      is.read(data.data(), chunk_size);
      if (!is) throw FormatError("truncated data chunk: " + path);
      have_data = true;
    } else {
      is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data)
    throw FormatError("missing fmt or data chunk: " + path);
  if (channels == 0 || rate == 0)
    throw FormatError("bad fmt fields: " + path);

  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw FormatError("unsupported WAV encoding (want 16-bit PCM or 32-bit float): " +
                      path);

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data.size() / frame_bytes;
  if (frames == 0) throw FormatError("empty data chunk: " + path);

  AudioBuffer out;
  out.sample_rate_hz = static_cast<int>(rate);
  out.samples.resize(frames);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* s = p + f * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        std::int16_t v = static_cast<std::int16_t>(s[0] | (s[1] << 8));
        acc += v / 32768.0;
      } else {
        float v;
        std::memcpy(&v, s, 4);
        acc += v;
      }
    }
    out.samples[f] = acc / channels;
  }
  return out;
}

void write_wav(const AudioBuffer& buffer, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);

  const std::uint32_t n = static_cast<std::uint32_t>(buffer.samples.size());
  const std::uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u16(os, 1);  // PCM
  write_u16(os, 1);  // mono
  write_u32(os, static_cast<std::uint32_t>(buffer.sample_rate_hz));
  write_u32(os, static_cast<std::uint32_t>(buffer.sample_rate_hz) * 2);
  write_u16(os, 2);
  write_u16(os, 16);
  os.write("data", 4);
  write_u32(os, data_bytes);
  for (double x : buffer.samples) {
    long v = std::lround(x * 32768.0);
    v = std::clamp(v, -32768L, 32767L);
    write_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  if (!os) throw IoError("write failed: " + path);
}

double peak_abs(const AudioBuffer& buffer) {
  double p = 0.0;
  for (double x : buffer.samples) p = std::max(p, std::fabs(x));
  return p;
}

AudioBuffer synth_utterance(std::uint64_t seed, double duration_s,
                            int sample_rate_hz) {
  if (duration_s <= 0.0) throw ParamError("duration_s must be positive");
  if (sample_rate_hz <= 0) throw ParamError("sample_rate_hz must be positive");

  Rng rng(mix_seed(0x5eed7beefULL, seed));
  const std::size_t n =
      static_cast<std::size_t>(std::lround(duration_s * sample_rate_hz));
  AudioBuffer out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.assign(std::max<std::size_t>(n, 1), 0.0);

  // Voiced part: harmonic series with slow pitch drift and vibrato.
  const double f0 = rng.uniform(95.0, 220.0);
  const double drift_hz = rng.uniform(0.2, 0.6);
  const double drift_depth = rng.uniform(0.02, 0.08);
  const double vib_hz = rng.uniform(4.5, 6.5);
  const double vib_depth = rng.uniform(0.005, 0.02);
  const double syllable_hz = rng.uniform(2.0, 4.0);
  const double syllable_phase = rng.uniform(0.0, 2.0 * M_PI);
  const int num_harmonics = 10;
  std::vector<double> harm_amp(num_harmonics);
  // Rough spectral tilt with two formant-like bumps.
  const double formant1 = rng.uniform(400.0, 900.0);
  const double formant2 = rng.uniform(1200.0, 2600.0);
  for (int k = 0; k < num_harmonics; ++k) {
    double fk = f0 * (k + 1);
    double bump1 = std::exp(-0.5 * std::pow((fk - formant1) / 250.0, 2));
    double bump2 = 0.6 * std::exp(-0.5 * std::pow((fk - formant2) / 400.0, 2));
    harm_amp[k] = (1.0 / (k + 1)) * (0.35 + bump1 + bump2);
  }

  const double dt = 1.0 / sample_rate_hz;
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    double t = i * dt;
    double inst_f0 = f0 * (1.0 + drift_depth * std::sin(2.0 * M_PI * drift_hz * t) +
                           vib_depth * std::sin(2.0 * M_PI * vib_hz * t));
    phase += 2.0 * M_PI * inst_f0 * dt;
    double env =
        0.5 * (1.0 + std::sin(2.0 * M_PI * syllable_hz * t + syllable_phase));
    env = std::pow(env, 1.5);
    double v = 0.0;
    for (int k = 0; k < num_harmonics; ++k)
      v += harm_amp[k] * std::sin(phase * (k + 1));
    out.samples[i] = env * v;
  }

  // Unvoiced part: noise bursts through a two-pole resonator, filling the
  // envelope troughs.
  const double noise_fc = rng.uniform(2000.0, std::min(5000.0, sample_rate_hz / 2.2));
  const double r = 0.96;
  const double w = 2.0 * M_PI * noise_fc / sample_rate_hz;
  const double a1 = -2.0 * r * std::cos(w);
  const double a2 = r * r;
  double y1 = 0.0, y2 = 0.0;
  const double noise_gain = rng.uniform(0.05, 0.15);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    double t = i * dt;
    double env =
        0.5 * (1.0 - std::sin(2.0 * M_PI * syllable_hz * t + syllable_phase));
    env = std::pow(env, 2.0);
    double x = rng.normal();
    double y = x - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    out.samples[i] += noise_gain * env * y * (1.0 - r);
  }

  // Peak-normalize to 0.9.
  double p = peak_abs(out);
  if (p > 0.0) {
    double g = 0.9 / p;
    for (double& x : out.samples) x *= g;
  }
  return out;
}

}  // namespace acx
