// acx/scenario.cpp
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

#include "acx/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "acx/errors.hpp"
#include "acx/parallel.hpp"

namespace acx {

namespace {

using nlohmann::json;

std::string canonical_real(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

json spec_to_json(const DistortionSpec& s) {
  json j = json::object();
  if (s.noise_id) j["noise_id"] = *s.noise_id;
  if (s.snr_db) j["snr_db"] = *s.snr_db;
  if (s.rir_id) j["rir_id"] = *s.rir_id;
  if (s.room_size) j["room_size"] = room_size_name(*s.room_size);
  if (s.cutoff_hz) j["cutoff_hz"] = *s.cutoff_hz;
  if (s.clip_factor) j["clip_factor"] = *s.clip_factor;
  j["spec_id"] = s.spec_id_hex();
  return j;
}

DistortionSpec spec_from_json(const json& j) {
  DistortionSpec s;
  if (j.contains("noise_id")) s.noise_id = j["noise_id"].get<std::string>();
  if (j.contains("snr_db")) s.snr_db = j["snr_db"].get<double>();
  if (j.contains("rir_id")) s.rir_id = j["rir_id"].get<std::string>();
  if (j.contains("room_size"))
    s.room_size = room_size_from_name(j["room_size"].get<std::string>());
  if (j.contains("cutoff_hz")) s.cutoff_hz = j["cutoff_hz"].get<double>();
  if (j.contains("clip_factor")) s.clip_factor = j["clip_factor"].get<double>();
  return s;
}

std::uint64_t DistortionSpec::spec_id() const {
  std::string canon;
  canon += "noise=" + (noise_id ? *noise_id : "-") + ";";
  canon += "snr=" + (snr_db ? canonical_real(*snr_db) : "-") + ";";
  canon += "rir=" + (rir_id ? *rir_id : "-") + ";";
  canon += "room=" + (room_size ? room_size_name(*room_size) : "-") + ";";
  canon += "cutoff=" + (cutoff_hz ? canonical_real(*cutoff_hz) : "-") + ";";
  canon += "clip=" + (clip_factor ? canonical_real(*clip_factor) : "-");
  return fnv1a(canon);
}

std::string DistortionSpec::spec_id_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(spec_id()));
  return buf;
}

void validate_spec(const DistortionSpec& spec) {
  if (spec.noise_id.has_value() != spec.snr_db.has_value())
    throw ParamError("spec: snr_db present iff noise_id present");
  if (spec.rir_id.has_value() != spec.room_size.has_value())
    throw ParamError("spec: rir_id present iff room_size present");
  if (spec.snr_db && (*spec.snr_db < -5.0 || *spec.snr_db > 30.0))
    throw ParamError("spec: snr_db outside [-5, 30]");
  if (spec.cutoff_hz && (*spec.cutoff_hz < 1000.0 || *spec.cutoff_hz > 8000.0))
    throw ParamError("spec: cutoff_hz outside [1000, 8000]");
  if (spec.clip_factor && (*spec.clip_factor < 0.0 || *spec.clip_factor > 0.5))
    throw ParamError("spec: clip_factor outside [0, 0.5]");
}

AssetResolver::AssetResolver(int sample_rate_hz, int synth_noise_count,
                             int synth_rir_per_room)
    : sample_rate_hz_(sample_rate_hz) {
  for (int k = 0; k < synth_noise_count; ++k)
    noise_ids_.push_back("synth:" + std::to_string(k));
  for (RoomSize room :
       {RoomSize::kSmall, RoomSize::kMedium, RoomSize::kLarge}) {
    auto& ids = rir_ids_[room];
    for (int k = 0; k < synth_rir_per_room; ++k)
      ids.push_back("synth:" + room_size_name(room) + ":" + std::to_string(k));
  }
}

void AssetResolver::add_noise_file(const std::string& id,
                                   const std::string& path) {
  noise_ids_.push_back(id);
  noise_files_[id] = path;
}

void AssetResolver::add_rir_file(const std::string& id, RoomSize room,
                                 const std::string& path) {
  rir_ids_[room].push_back(id);
  rir_files_[id] = path;
}

const std::vector<std::string>& AssetResolver::rir_ids(RoomSize room) const {
  return rir_ids_.at(room);
}

AudioBuffer AssetResolver::noise(const std::string& id,
                                 std::size_t min_samples) const {
  if (id.rfind("synth:", 0) == 0) {
    std::uint64_t k = std::stoull(id.substr(6));
    double dur =
        static_cast<double>(min_samples + 1) / sample_rate_hz_ + 0.01;
    return synth_noise(k, dur, sample_rate_hz_);
  }
  auto it = noise_files_.find(id);
  if (it == noise_files_.end())
    throw ConfigError("unresolvable noise asset: " + id);
  AudioBuffer b = read_wav(it->second);
  if (b.sample_rate_hz != sample_rate_hz_) b = resample(b, sample_rate_hz_);
  if (b.samples.empty()) throw DegenerateInputError("empty noise asset: " + id);
  // Tile short noise files.
  while (b.samples.size() < min_samples) {
    std::size_t n = b.samples.size();
    b.samples.reserve(min_samples + n);
    for (std::size_t i = 0; b.samples.size() < min_samples && i < n; ++i)
      b.samples.push_back(b.samples[i]);
  }
  return b;
}

AudioBuffer AssetResolver::rir(const std::string& id) const {
  if (id.rfind("synth:", 0) == 0) {
    std::string rest = id.substr(6);
    auto colon = rest.find(':');
    if (colon == std::string::npos)
      throw ConfigError("bad synthetic RIR id: " + id);
    RoomSize room = room_size_from_name(rest.substr(0, colon));
    std::uint64_t k = std::stoull(rest.substr(colon + 1));
    return synth_rir(k, room, sample_rate_hz_);
  }
  auto it = rir_files_.find(id);
  if (it == rir_files_.end()) throw ConfigError("unresolvable RIR asset: " + id);
  AudioBuffer b = read_wav(it->second);
  if (b.sample_rate_hz != sample_rate_hz_) b = resample(b, sample_rate_hz_);
  return b;
}

AudioBuffer apply_spec(const AudioBuffer& clean, const DistortionSpec& spec,
                       const AssetResolver& assets,
                       StageMeasurements* measurements) {
  validate_spec(spec);
  AudioBuffer cur = clean;

  if (spec.rir_id) {
    cur = apply_rir(cur, assets.rir(*spec.rir_id));
  }
  if (spec.noise_id) {
    AudioBuffer noise_buf = assets.noise(*spec.noise_id, cur.samples.size());
    AudioBuffer pre_mix = cur;
    cur = mix_at_snr(cur, noise_buf, *spec.snr_db);
    if (measurements) {
      // The mix is an exact linear combination of the two known components,
      // beta * speech + gamma * noise (beta == gamma unless the joint peak
      // rescale fired). Recover both gains by least squares and report the
      // power ratio of the scaled components.
      const auto& s = pre_mix.samples;
      const auto& n = noise_buf.samples;
      double ss = 0.0, nn = 0.0, sn = 0.0, ms = 0.0, mn = 0.0;
      for (std::size_t i = 0; i < cur.samples.size(); ++i) {
        ss += s[i] * s[i];
        nn += n[i] * n[i];
        sn += s[i] * n[i];
        ms += cur.samples[i] * s[i];
        mn += cur.samples[i] * n[i];
      }
      const double det = ss * nn - sn * sn;
      if (det > 0.0) {
        const double beta = (ms * nn - mn * sn) / det;
        const double gamma = (mn * ss - ms * sn) / det;
        const double p_sig = beta * beta * ss;
        const double p_noise = gamma * gamma * nn;
        if (p_sig > 0.0 && p_noise > 0.0)
          measurements->measured_snr_db = 10.0 * std::log10(p_sig / p_noise);
      }
    }
  }
  if (spec.cutoff_hz) {
    const double nyquist = cur.sample_rate_hz / 2.0;
    if (*spec.cutoff_hz < nyquist / 2.0) {
      int low_rate = static_cast<int>(std::lround(2.0 * *spec.cutoff_hz));
      int orig_rate = cur.sample_rate_hz;
      std::size_t orig_len = cur.samples.size();
      cur = resample(resample(cur, low_rate), orig_rate);
      cur.samples.resize(orig_len, 0.0);
    } else if (*spec.cutoff_hz < nyquist) {
      cur = apply_fir(cur, design_lowpass(*spec.cutoff_hz,
                                          cur.sample_rate_hz, 511));
    }
    // cutoff at or above Nyquist is a no-op distortion
  }
  if (measurements) measurements->clean_peak = peak_abs(cur);
  if (spec.clip_factor) {
    cur = clip_amplitude(cur, *spec.clip_factor);
    if (measurements) measurements->clipped_peak = peak_abs(cur);
  }
  return cur;
}

DistortionSpec sample_spec(Rng& rng, const DistortionSpec& constraints,
                           const AssetResolver& assets) {
  DistortionSpec s;
  if (constraints.noise_id) {
    s.noise_id = constraints.noise_id;
  } else {
    if (assets.noise_ids().empty())
      throw ConfigError("sample_spec: empty noise pool");
    s.noise_id = assets.noise_ids()[rng.uniform_index(assets.noise_ids().size())];
  }
  s.snr_db = constraints.snr_db ? *constraints.snr_db : rng.uniform(-5.0, 20.0);

  RoomSize room;
  if (constraints.room_size) {
    room = *constraints.room_size;
  } else {
    room = static_cast<RoomSize>(rng.uniform_index(3));
  }
  s.room_size = room;
  if (constraints.rir_id) {
    s.rir_id = constraints.rir_id;
  } else {
    const auto& pool = assets.rir_ids(room);
    if (pool.empty())
      throw ConfigError("sample_spec: empty RIR pool for room " +
                        room_size_name(room));
    s.rir_id = pool[rng.uniform_index(pool.size())];
  }

  s.cutoff_hz =
      constraints.cutoff_hz ? *constraints.cutoff_hz : rng.uniform(1000.0, 8000.0);
  s.clip_factor =
      constraints.clip_factor ? *constraints.clip_factor : rng.uniform(0.0, 0.5);
  validate_spec(s);
  return s;
}

UtterancePool::UtterancePool(std::uint64_t seed, int count, double duration_s,
                             int sample_rate_hz)
    : seed_(seed), duration_s_(duration_s), sample_rate_hz_(sample_rate_hz) {
  if (count < 1) throw ParamError("UtterancePool: count must be positive");
  for (int k = 0; k < count; ++k) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "utt%04d", k);
    ids_.push_back(buf);
  }
}

AudioBuffer UtterancePool::get(const std::string& id) const {
  if (id.rfind("utt", 0) != 0)
    throw ConfigError("unknown utterance id: " + id);
  std::uint64_t k = std::stoull(id.substr(3));
  return synth_utterance(mix_seed(seed_, k), duration_s_, sample_rate_hz_);
}

namespace {

CorpusManifest build_one_subset(const std::string& name,
                                const DistortionSpec& constraint,
                                const UtterancePool& pool,
                                const AssetResolver& assets,
                                std::uint64_t seed, int per_subset) {
  CorpusManifest m;
  m.name = name;
  m.seed = seed;
  m.sample_rate_hz = assets.sample_rate_hz();
  const std::uint64_t name_hash = fnv1a(name);
  for (int i = 0; i < per_subset; ++i) {
    Rng rng(mix_seed(seed, name_hash, static_cast<std::uint64_t>(i)));
    ManifestEntry e;
    e.utterance_id = pool.ids()[rng.uniform_index(pool.ids().size())];
    e.spec = sample_spec(rng, constraint, assets);
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace

std::vector<CorpusManifest> build_subsets(const UtterancePool& pool,
                                          const AssetResolver& assets,
                                          std::uint64_t seed, int per_subset) {
  if (per_subset < 1) throw ParamError("build_subsets: per_subset must be >= 1");
  std::vector<CorpusManifest> out;
  for (double snr : {-5.0, 0.0, 5.0, 10.0, 15.0, 20.0}) {
    DistortionSpec c;
    c.snr_db = snr;
    std::ostringstream name;
    name << "snr_" << snr;
    out.push_back(
        build_one_subset(name.str(), c, pool, assets, seed, per_subset));
  }
  for (double cutoff : {1000.0, 3000.0, 5000.0, 7000.0}) {
    DistortionSpec c;
    c.cutoff_hz = cutoff;
    std::ostringstream name;
    name << "cutoff_" << cutoff;
    out.push_back(
        build_one_subset(name.str(), c, pool, assets, seed, per_subset));
  }
  for (RoomSize room : {RoomSize::kLarge, RoomSize::kMedium, RoomSize::kSmall}) {
    DistortionSpec c;
    c.room_size = room;
    out.push_back(build_one_subset("room_" + room_size_name(room), c, pool,
                                   assets, seed, per_subset));
  }
  return out;
}

CorpusManifest build_training_manifest(const UtterancePool& pool,
                                       const AssetResolver& assets,
                                       std::uint64_t seed, int count) {
  return build_one_subset("train", DistortionSpec{}, pool, assets, seed, count);
}

void materialize_manifest(CorpusManifest& manifest, const UtterancePool& pool,
                          const AssetResolver& assets,
                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "clean");
  fs::create_directories(fs::path(out_dir) / manifest.name);

  // Clean files first (entries may share utterances).
  std::set<std::string> clean_ids;
  for (auto& e : manifest.entries) clean_ids.insert(e.utterance_id);
  std::vector<std::string> clean_list(clean_ids.begin(), clean_ids.end());
  parallel_for(clean_list.size(), [&](std::size_t i) {
    const std::string& id = clean_list[i];
    std::string path = (fs::path(out_dir) / "clean" / (id + ".wav")).string();
    write_wav(pool.get(id), path);
  });

  parallel_for(manifest.entries.size(), [&](std::size_t i) {
    ManifestEntry& e = manifest.entries[i];
    e.clean_path =
        (fs::path(out_dir) / "clean" / (e.utterance_id + ".wav")).string();
    char idx[16];
    std::snprintf(idx, sizeof(idx), "%05zu", i);
    e.degraded_path = (fs::path(out_dir) / manifest.name /
                       (std::string(idx) + "_" + e.utterance_id + ".wav"))
                          .string();
    AudioBuffer clean = pool.get(e.utterance_id);
    AudioBuffer degraded = apply_spec(clean, e.spec, assets, &e.measured);
    write_wav(degraded, e.degraded_path);
  });
}

void write_manifest_jsonl(const CorpusManifest& manifest,
                          const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest: " + path);
  json header;
  header["manifest"] = manifest.name;
  header["seed"] = manifest.seed;
  header["sample_rate_hz"] = manifest.sample_rate_hz;
  os << header.dump() << '\n';
  for (const auto& e : manifest.entries) {
    json j;
    j["utterance_id"] = e.utterance_id;
    j["clean_path"] = e.clean_path;
    j["degraded_path"] = e.degraded_path;
    j["spec"] = spec_to_json(e.spec);
    if (e.measured.measured_snr_db)
      j["measured_snr_db"] = *e.measured.measured_snr_db;
    if (e.measured.clean_peak) j["pre_clip_peak"] = *e.measured.clean_peak;
    if (e.measured.clipped_peak) j["post_clip_peak"] = *e.measured.clipped_peak;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("manifest write failed: " + path);
}

CorpusManifest read_manifest_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read manifest: " + path);
  CorpusManifest m;
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty manifest: " + path);
  json header = json::parse(line);
  m.name = header.at("manifest").get<std::string>();
  m.seed = header.at("seed").get<std::uint64_t>();
  m.sample_rate_hz = header.at("sample_rate_hz").get<int>();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ManifestEntry e;
    e.utterance_id = j.at("utterance_id").get<std::string>();
    e.clean_path = j.value("clean_path", "");
    e.degraded_path = j.value("degraded_path", "");
    e.spec = spec_from_json(j.at("spec"));
    if (j.contains("measured_snr_db"))
      e.measured.measured_snr_db = j["measured_snr_db"].get<double>();
    if (j.contains("pre_clip_peak"))
      e.measured.clean_peak = j["pre_clip_peak"].get<double>();
    if (j.contains("post_clip_peak"))
      e.measured.clipped_peak = j["post_clip_peak"].get<double>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace acx
