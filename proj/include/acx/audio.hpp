// acx/audio.hpp
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

#ifndef ACX_AUDIO_HPP
#define ACX_AUDIO_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace acx {

// Mono sample sequence. Amplitudes nominally in [-1, 1]; synthesis ops that
// declare normalized output keep them there.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = 0;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Reads a RIFF/WAVE file. Accepts 16-bit PCM and 32-bit IEEE float, mono or
// multichannel; multichannel is downmixed by channel averaging. Integer PCM
// is scaled to [-1, 1] by 1/32768.
AudioBuffer read_wav(const std::string& path);

// Writes 16-bit PCM little-endian mono. Round-trips within one quantization
// step (1/32768) per sample for in-range input; out-of-range samples saturate.
void write_wav(const AudioBuffer& buffer, const std::string& path);

// Deterministic speech-like test signal: pitch-modulated harmonic series plus
// formant-filtered noise bursts, all parameters drawn from the seed.
// Peak-normalized to 0.9. Same (seed, duration, rate) -> bit-identical output.
AudioBuffer synth_utterance(std::uint64_t seed, double duration_s,
                            int sample_rate_hz);

double peak_abs(const AudioBuffer& buffer);

}  // namespace acx

#endif  // ACX_AUDIO_HPP
