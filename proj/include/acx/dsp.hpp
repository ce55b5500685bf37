// acx/dsp.hpp
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

#ifndef ACX_DSP_HPP
#define ACX_DSP_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "acx/audio.hpp"

namespace acx {

enum class RoomSize { kSmall, kMedium, kLarge };

std::string room_size_name(RoomSize rs);
RoomSize room_size_from_name(const std::string& name);

// Linear-phase FIR. Odd tap count; low-pass designs have unity DC gain.
struct FirFilter {
  std::vector<double> taps;
  std::string description;
};

namespace kernels {

// Direct FIR convolution with group-delay compensation: out[i] =
// sum_k taps[k] * x[i + (taps-1)/2 - k], zeros outside. Serial reference and
// the OpenMP version must produce bit-identical output.
std::vector<double> fir_convolve_serial(const std::vector<double>& x,
                                        const std::vector<double>& taps);
std::vector<double> fir_convolve_parallel(const std::vector<double>& x,
                                          const std::vector<double>& taps);

// Windowed-sinc resampling kernel, one output sample per index.
std::vector<double> resample_serial(const std::vector<double>& x, double ratio,
                                    std::size_t out_len);
std::vector<double> resample_parallel(const std::vector<double>& x,
                                      double ratio, std::size_t out_len);

}  // namespace kernels

// Scales noise so 10*log10(P_speech / (g^2 * P_noise)) = snr_db over the
// mixed region, then adds. If the mixture peak exceeds 1, both components are
// scaled down jointly (SNR preserved) so the peak is 0.99. The noise is
// cropped starting at noise_offset.
AudioBuffer mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise,
                       double snr_db, std::size_t noise_offset = 0);

// Hamming-windowed-sinc linear-phase low-pass, DC gain exactly 1.
FirFilter design_lowpass(double cutoff_hz, int sample_rate_hz, int num_taps);

// Same-length output, aligned by (taps-1)/2.
AudioBuffer apply_fir(const AudioBuffer& signal, const FirFilter& filter);

// Arbitrary-ratio windowed-sinc resampling with anti-alias low-pass at
// min(Nyquist_in, Nyquist_out). Output length = round(len * target / source).
AudioBuffer resample(const AudioBuffer& signal, int target_rate_hz);

// Full convolution truncated to the speech length, aligned at the RIR's
// direct-path peak (argmax |rir|); output peak-normalized to the input peak.
AudioBuffer apply_rir(const AudioBuffer& speech, const AudioBuffer& rir);

// Clamps to [-t, t] with t = (1 - clip_factor) * peak. clip_factor in [0, 0.5].
AudioBuffer clip_amplitude(const AudioBuffer& signal, double clip_factor);

// Deterministic exponentially-decaying noise RIR with a direct-path impulse
// at t=0. Class decay targets: small ~0.15 s, medium ~0.5 s, large ~1.0 s,
// with seeded jitter of +/-20%.
AudioBuffer synth_rir(std::uint64_t seed, RoomSize room_size,
                      int sample_rate_hz);

// Deterministic seeded noise generators used as synthetic assets.
AudioBuffer synth_noise(std::uint64_t seed, double duration_s,
                        int sample_rate_hz);

double mean_square_power(const std::vector<double>& x);

}  // namespace acx

#endif  // ACX_DSP_HPP
