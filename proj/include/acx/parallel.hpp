// acx/parallel.hpp
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

#ifndef ACX_PARALLEL_HPP
#define ACX_PARALLEL_HPP

#include <cstddef>
#include <cstdint>

namespace acx {

// Process-wide worker count for parallel_for. 0 means "OpenMP default".
// Results must never depend on this value: every loop body writes only to
// its own index's slot.
void set_num_jobs(int jobs);
int num_jobs();

// Data-parallel map over [0, n). body(i) must be independent across i.
// With ACX_SERIAL defined (the reference build) this is a plain loop.
template <typename Body>
void parallel_for(std::size_t n, const Body& body);

#if defined(ACX_SERIAL) || !defined(_OPENMP)

template <typename Body>
void parallel_for(std::size_t n, const Body& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

#else

template <typename Body>
void parallel_for(std::size_t n, const Body& body) {
  const int jobs = num_jobs();
  if (jobs > 0) {
#pragma omp parallel for schedule(static) num_threads(jobs)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
      body(static_cast<std::size_t>(i));
  } else {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
      body(static_cast<std::size_t>(i));
  }
}

#endif

}  // namespace acx

#endif  // ACX_PARALLEL_HPP
