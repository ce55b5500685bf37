// acx/parallel.cpp
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

#include "acx/parallel.hpp"

#include <atomic>

namespace acx {

namespace {
std::atomic<int> g_jobs{0};
}

void set_num_jobs(int jobs) { g_jobs.store(jobs < 0 ? 0 : jobs); }

int num_jobs() { return g_jobs.load(); }

}  // namespace acx
