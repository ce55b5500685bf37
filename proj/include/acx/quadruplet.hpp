// acx/quadruplet.hpp
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

#ifndef ACX_QUADRUPLET_HPP
#define ACX_QUADRUPLET_HPP

#include <string>
#include <vector>

#include "acx/scenario.hpp"

namespace acx {

// One degraded rendition: an utterance under a full distortion spec.
struct QuadItem {
  std::string utterance_id;
  DistortionSpec spec;
};

// The four-sample training tuple. The anchor and positive share one spec but
// differ in speech content; the hard negative reuses one of the two
// utterances with the same distortion types at a different intensity of
// exactly one of them. clean_ref is the anchor's utterance, undistorted.
struct Quadruplet {
  QuadItem anchor;
  QuadItem positive;
  QuadItem hard_negative;
  std::string clean_ref;  // utterance id
};

// Minibatch; for anchor i the weak-negative set is every other quadruplet's
// anchor and positive. All spec_ids are pairwise distinct.
struct QuadBatch {
  std::vector<Quadruplet> quads;
};

// Minimum material intensity deltas for hard negatives.
constexpr double kMinSnrDelta = 5.0;
constexpr double kMinCutoffDelta = 1000.0;
constexpr double kMinClipDelta = 0.15;

Quadruplet make_quadruplet(Rng& rng,
                           const std::vector<std::string>& utterance_pool,
                           const AssetResolver& assets);

QuadBatch make_batch(Rng& rng, int size,
                     const std::vector<std::string>& utterance_pool,
                     const AssetResolver& assets);

// Re-derives every invariant from the tuple contents alone; returns a list
// of human-readable violations (empty mean valid). Trusts nothing about how
// the tuple was built.
std::vector<std::string> validate_quadruplet(const Quadruplet& q);
std::vector<std::string> validate_batch(const QuadBatch& batch);

void write_quadruplets_jsonl(const std::vector<Quadruplet>& quads,
                             const std::string& path);
std::vector<Quadruplet> read_quadruplets_jsonl(const std::string& path);

}  // namespace acx

#endif  // ACX_QUADRUPLET_HPP
