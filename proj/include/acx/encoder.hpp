// acx/encoder.hpp
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

#ifndef ACX_ENCODER_HPP
#define ACX_ENCODER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "acx/audio.hpp"

namespace acx {

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

struct EncoderConfig {
  int sample_rate_hz = 16000;
  int num_mel_bands = 64;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int dim = 512;
  std::uint64_t seed = 1234;
  // Level sensitivity is deliberate: distortion intensity is level-correlated.
  bool gain_normalize = false;
};

// Frozen stand-in for a pretrained audio encoder: log-mel spectrogram,
// per-band statistics (mean, std, p10, p90), then a seeded random linear map
// to the output dimension. All parameters are fixed at construction.
class MelStatEncoder {
 public:
  explicit MelStatEncoder(const EncoderConfig& config);

  // Requires signal length >= 0.2 s. Pure and deterministic.
  Embedding encode(const AudioBuffer& signal) const;

  int dim() const { return config_.dim; }
  const EncoderConfig& config() const { return config_; }

  // Stable hash over all frozen parameters; the trainer asserts it is
  // unchanged across a run.
  std::uint64_t params_checksum() const;

 private:
  std::vector<double> mel_stats(const AudioBuffer& signal) const;

  EncoderConfig config_;
  std::vector<std::vector<double>> mel_filters_;  // [band][fft bin]
  std::vector<double> window_;
  std::size_t fft_size_ = 0;
  std::vector<std::vector<double>> projection_;  // [dim][feature]
};

// Embedding container: magic "ACXE", version u32, dim u32, count u64, then
// per row (id-length u16, UTF-8 id, dim little-endian float32).
void write_embeddings(const std::vector<std::pair<std::string, Embedding>>& rows,
                      const std::string& path);
std::map<std::string, Embedding> load_embeddings(const std::string& path);

}  // namespace acx

#endif  // ACX_ENCODER_HPP
