// acx/scenario.hpp
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

#ifndef ACX_SCENARIO_HPP
#define ACX_SCENARIO_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acx/audio.hpp"
#include "acx/dsp.hpp"
#include "acx/rng.hpp"

namespace acx {

// One acoustic condition: which distortions are present and at what
// intensity. Absent fields mean "this distortion is not applied".
struct DistortionSpec {
  std::optional<std::string> noise_id;
  std::optional<double> snr_db;       // present iff noise_id present
  std::optional<std::string> rir_id;
  std::optional<RoomSize> room_size;  // present iff rir_id present
  std::optional<double> cutoff_hz;
  std::optional<double> clip_factor;

  bool operator==(const DistortionSpec& other) const = default;

  // Stable content hash over a canonical field rendering.
  std::uint64_t spec_id() const;
  std::string spec_id_hex() const;
};

void validate_spec(const DistortionSpec& spec);

nlohmann::json spec_to_json(const DistortionSpec& spec);
DistortionSpec spec_from_json(const nlohmann::json& j);

// Resolves noise/RIR identifiers to buffers. Ids of the form
// "synth:<k>" are generated on demand; anything else is treated as a WAV
// path relative to the configured asset directories.
class AssetResolver {
 public:
  AssetResolver(int sample_rate_hz, int synth_noise_count,
                int synth_rir_per_room);

  // Adds file-backed assets. RIR files must be registered under a room class.
  void add_noise_file(const std::string& id, const std::string& path);
  void add_rir_file(const std::string& id, RoomSize room, const std::string& path);

  const std::vector<std::string>& noise_ids() const { return noise_ids_; }
  const std::vector<std::string>& rir_ids(RoomSize room) const;

  // Noise of at least min_samples (synthetic assets are generated long
  // enough; file assets are tiled).
  AudioBuffer noise(const std::string& id, std::size_t min_samples) const;
  AudioBuffer rir(const std::string& id) const;

  int sample_rate_hz() const { return sample_rate_hz_; }

 private:
  int sample_rate_hz_;
  std::vector<std::string> noise_ids_;
  std::map<RoomSize, std::vector<std::string>> rir_ids_;
  std::map<std::string, std::string> noise_files_;
  std::map<std::string, std::string> rir_files_;
};

// Per-stage measurements recorded while applying a spec, used to verify the
// controlled factor on materialized corpora.
struct StageMeasurements {
  std::optional<double> measured_snr_db;   // at the mixing stage
  std::optional<double> clean_peak;        // before clipping
  std::optional<double> clipped_peak;      // after clipping
};

// Applies the distortion chain in fixed order: RIR convolution, noise mixing,
// bandlimiting, clipping. Absent fields skip their stage.
AudioBuffer apply_spec(const AudioBuffer& clean, const DistortionSpec& spec,
                       const AssetResolver& assets,
                       StageMeasurements* measurements = nullptr);

// Draws unconstrained fields uniformly: SNR in [-5, 20], cutoff in
// [1000, 8000], clip factor in [0, 0.5], asset ids uniform over the pools.
// Constrained fields are copied verbatim.
DistortionSpec sample_spec(Rng& rng, const DistortionSpec& constraints,
                           const AssetResolver& assets);

struct ManifestEntry {
  std::string utterance_id;
  std::string clean_path;
  std::string degraded_path;
  DistortionSpec spec;
  StageMeasurements measured;
};

struct CorpusManifest {
  std::string name;
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  int sample_rate_hz = 0;
};

// Deterministic synthetic utterance pool; ids are "utt<k>".
class UtterancePool {
 public:
  UtterancePool(std::uint64_t seed, int count, double duration_s,
                int sample_rate_hz);

  const std::vector<std::string>& ids() const { return ids_; }
  AudioBuffer get(const std::string& id) const;
  int sample_rate_hz() const { return sample_rate_hz_; }
  double duration_s() const { return duration_s_; }

 private:
  std::uint64_t seed_;
  double duration_s_;
  int sample_rate_hz_;
  std::vector<std::string> ids_;
};

// The 13 structured evaluation subsets: SNR in {-5,0,5,10,15,20} fixed,
// cutoff in {1,3,5,7} kHz fixed, room size in {large, medium, small} fixed;
// within each subset the named factor is constant, all others randomized.
std::vector<CorpusManifest> build_subsets(const UtterancePool& pool,
                                          const AssetResolver& assets,
                                          std::uint64_t seed, int per_subset);

// A training manifest: fully random specs over the pool.
CorpusManifest build_training_manifest(const UtterancePool& pool,
                                       const AssetResolver& assets,
                                       std::uint64_t seed, int count);

// Writes all degraded (and clean) files referenced by the manifest and fills
// in per-entry measurements. Parallel over entries; output independent of
// worker count.
void materialize_manifest(CorpusManifest& manifest, const UtterancePool& pool,
                          const AssetResolver& assets,
                          const std::string& out_dir);

void write_manifest_jsonl(const CorpusManifest& manifest,
                          const std::string& path);
CorpusManifest read_manifest_jsonl(const std::string& path);

}  // namespace acx

#endif  // ACX_SCENARIO_HPP
