// acx/quadruplet.cpp
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

#include "acx/quadruplet.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "acx/errors.hpp"

namespace acx {

namespace {

using nlohmann::json;

// Draws uniformly from [lo, hi] excluding the open interval
// (center - min_delta, center + min_delta).
double draw_with_excluded_band(Rng& rng, double lo, double hi, double center,
                               double min_delta) {
  const double left_lo = lo;
  const double left_hi = std::min(hi, center - min_delta);
  const double right_lo = std::max(lo, center + min_delta);
  const double right_hi = hi;
  const double left_len = std::max(0.0, left_hi - left_lo);
  const double right_len = std::max(0.0, right_hi - right_lo);
  if (left_len + right_len <= 0.0)
    throw ConfigError("no room for a material intensity delta");
  double u = rng.uniform(0.0, left_len + right_len);
  return u < left_len ? left_lo + u : right_lo + (u - left_len);
}

}  // namespace

Quadruplet make_quadruplet(Rng& rng,
                           const std::vector<std::string>& utterance_pool,
                           const AssetResolver& assets) {
  if (utterance_pool.size() < 2)
    throw ConfigError("make_quadruplet: need at least 2 utterances");

  DistortionSpec spec = sample_spec(rng, DistortionSpec{}, assets);

  std::size_t ia = rng.uniform_index(utterance_pool.size());
  std::size_t ip = rng.uniform_index(utterance_pool.size() - 1);
  if (ip >= ia) ++ip;

  Quadruplet q;
  q.anchor = {utterance_pool[ia], spec};
  q.positive = {utterance_pool[ip], spec};
  q.clean_ref = utterance_pool[ia];

  // Hard negative: same distortion types, one intensity changed materially.
  DistortionSpec hard = spec;
  switch (rng.uniform_index(4)) {
    case 0:
      hard.snr_db =
          draw_with_excluded_band(rng, -5.0, 20.0, *spec.snr_db, kMinSnrDelta);
      break;
    case 1: {
      RoomSize other = static_cast<RoomSize>(
          (static_cast<int>(*spec.room_size) + 1 + rng.uniform_index(2)) % 3);
      hard.room_size = other;
      const auto& pool = assets.rir_ids(other);
      if (pool.empty())
        throw ConfigError("empty RIR pool for room " + room_size_name(other));
      hard.rir_id = pool[rng.uniform_index(pool.size())];
      break;
    }
    case 2:
      hard.cutoff_hz = draw_with_excluded_band(rng, 1000.0, 8000.0,
                                               *spec.cutoff_hz, kMinCutoffDelta);
      break;
    case 3:
      hard.clip_factor = draw_with_excluded_band(rng, 0.0, 0.5,
                                                 *spec.clip_factor, kMinClipDelta);
      break;
  }
  q.hard_negative = {rng.uniform() < 0.5 ? q.anchor.utterance_id
                                         : q.positive.utterance_id,
                     hard};
  return q;
}

QuadBatch make_batch(Rng& rng, int size,
                     const std::vector<std::string>& utterance_pool,
                     const AssetResolver& assets) {
  if (size < 2) throw ParamError("make_batch: size must be >= 2");
  QuadBatch batch;
  std::set<std::uint64_t> seen;
  long attempts = 0;
  const long max_attempts = 100L * size;
  while (static_cast<int>(batch.quads.size()) < size) {
    if (++attempts > max_attempts)
      throw ConfigError("make_batch: could not draw distinct spec_ids");
    Quadruplet q = make_quadruplet(rng, utterance_pool, assets);
    if (!seen.insert(q.anchor.spec.spec_id()).second) continue;
    batch.quads.push_back(std::move(q));
  }
  return batch;
}

std::vector<std::string> validate_quadruplet(const Quadruplet& q) {
  std::vector<std::string> violations;

  if (q.anchor.spec.spec_id() != q.positive.spec.spec_id() ||
      !(q.anchor.spec == q.positive.spec))
    violations.push_back("anchor and positive specs differ");
  if (q.anchor.utterance_id == q.positive.utterance_id)
    violations.push_back("anchor and positive share an utterance");
  if (q.hard_negative.utterance_id != q.anchor.utterance_id &&
      q.hard_negative.utterance_id != q.positive.utterance_id)
    violations.push_back("hard negative reuses neither anchor nor positive");
  if (q.clean_ref != q.anchor.utterance_id)
    violations.push_back("clean_ref is not the anchor's utterance");

  const DistortionSpec& a = q.anchor.spec;
  const DistortionSpec& h = q.hard_negative.spec;
  if (a.noise_id.has_value() != h.noise_id.has_value() ||
      a.snr_db.has_value() != h.snr_db.has_value() ||
      a.rir_id.has_value() != h.rir_id.has_value() ||
      a.room_size.has_value() != h.room_size.has_value() ||
      a.cutoff_hz.has_value() != h.cutoff_hz.has_value() ||
      a.clip_factor.has_value() != h.clip_factor.has_value()) {
    violations.push_back("hard negative changes the distortion type set");
    return violations;
  }
  if (a.noise_id != h.noise_id)
    violations.push_back("hard negative changes the noise type");

  int changed = 0;
  bool snr_changed = a.snr_db && *a.snr_db != *h.snr_db;
  bool reverb_changed =
      a.room_size && (*a.room_size != *h.room_size || *a.rir_id != *h.rir_id);
  bool cutoff_changed = a.cutoff_hz && *a.cutoff_hz != *h.cutoff_hz;
  bool clip_changed = a.clip_factor && *a.clip_factor != *h.clip_factor;
  changed = (snr_changed ? 1 : 0) + (reverb_changed ? 1 : 0) +
            (cutoff_changed ? 1 : 0) + (clip_changed ? 1 : 0);
  if (changed != 1)
    violations.push_back("hard negative must differ in exactly one intensity, "
                         "differs in " + std::to_string(changed));
  if (snr_changed && std::fabs(*a.snr_db - *h.snr_db) < kMinSnrDelta)
    violations.push_back("SNR delta below floor");
  if (reverb_changed && *a.room_size == *h.room_size)
    violations.push_back("reverb change must switch the room class");
  if (cutoff_changed &&
      std::fabs(*a.cutoff_hz - *h.cutoff_hz) < kMinCutoffDelta)
    violations.push_back("cutoff delta below floor");
  if (clip_changed && std::fabs(*a.clip_factor - *h.clip_factor) < kMinClipDelta)
    violations.push_back("clip delta below floor");
  return violations;
}

std::vector<std::string> validate_batch(const QuadBatch& batch) {
  std::vector<std::string> violations;
  if (batch.quads.size() < 2)
    violations.push_back("batch smaller than 2");
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < batch.quads.size(); ++i) {
    for (const auto& v : validate_quadruplet(batch.quads[i]))
      violations.push_back("quad " + std::to_string(i) + ": " + v);
    if (!seen.insert(batch.quads[i].anchor.spec.spec_id()).second)
      violations.push_back("quad " + std::to_string(i) +
                           ": duplicate spec_id in batch");
  }
  return violations;
}

namespace {

json item_to_json(const QuadItem& item) {
  json j;
  j["utterance_id"] = item.utterance_id;
  j["spec"] = spec_to_json(item.spec);
  return j;
}

QuadItem item_from_json(const json& j) {
  return {j.at("utterance_id").get<std::string>(), spec_from_json(j.at("spec"))};
}

}  // namespace

void write_quadruplets_jsonl(const std::vector<Quadruplet>& quads,
                             const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write quadruplet manifest: " + path);
  for (const auto& q : quads) {
    json j;
    j["anchor"] = item_to_json(q.anchor);
    j["positive"] = item_to_json(q.positive);
    j["hard_negative"] = item_to_json(q.hard_negative);
    j["clean_ref"] = q.clean_ref;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("quadruplet manifest write failed: " + path);
}

std::vector<Quadruplet> read_quadruplets_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read quadruplet manifest: " + path);
  std::vector<Quadruplet> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Quadruplet q;
    q.anchor = item_from_json(j.at("anchor"));
    q.positive = item_from_json(j.at("positive"));
    q.hard_negative = item_from_json(j.at("hard_negative"));
    q.clean_ref = j.at("clean_ref").get<std::string>();
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace acx
