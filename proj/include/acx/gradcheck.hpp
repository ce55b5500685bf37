// acx/gradcheck.hpp
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

#ifndef ACX_GRADCHECK_HPP_
#define ACX_GRADCHECK_HPP_

#include <cstdint>
#include <string>

#include "acx/head.hpp"

namespace acx {

// Central finite differences, step h, on a random batch of B raw embeddings
// of dimension params.cfg.dim_in, all generated from `seed`.
struct GradCheckConfig {
  AcxHeadConfig head{8, 6, 4, true};
  std::size_t batch_size = 3;
  std::uint64_t seed = 1;
  double fd_step = 1e-5;
  // Test hook: perturb one analytic gradient entry so the check must fail.
  bool corrupt = false;
};

struct GradCheckReport {
  // Max relative FD error per loss term and for the summed loss, where the
  // relative error is |analytic - fd| / max(1, |analytic|, |fd|).
  double err_lc = 0.0;
  double err_ld = 0.0;
  double err_lnd = 0.0;
  double err_lnc = 0.0;
  double err_total = 0.0;
  double max_err = 0.0;
  std::size_t worst_param = 0;
  std::string worst_loss;
};

GradCheckReport run_gradcheck(const GradCheckConfig& cfg);

}  // namespace acx

#endif  // ACX_GRADCHECK_HPP_
