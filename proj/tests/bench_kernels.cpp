// Timing comparison of the serial reference kernels against their OpenMP
// counterparts, with a bit-exactness check on every run.

#include <chrono>
#include <cstdio>
#include <vector>

#include "acx/dsp.hpp"
#include "acx/parallel.hpp"
#include "acx/rng.hpp"

using namespace acx;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

template <typename F>
double time_best_of(int reps, const F& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0)
                              .count());
  }
  return best;
}

}  // namespace

int main() {
  std::printf("%-24s %12s %12s %8s %10s\n", "kernel", "serial_ms", "parallel_ms",
              "speedup", "bit_exact");
  int mismatches = 0;

  for (std::size_t n : {std::size_t{1} << 16, std::size_t{1} << 18,
                        std::size_t{1} << 20}) {
    std::vector<double> x = random_signal(n, 42);
    std::vector<double> taps = design_lowpass(4000.0, 16000, 511).taps;
    std::vector<double> a, b;
    double ts = time_best_of(3, [&] { a = kernels::fir_convolve_serial(x, taps); });
    double tp = time_best_of(3, [&] { b = kernels::fir_convolve_parallel(x, taps); });
    bool same = a == b;
    if (!same) ++mismatches;
    char name[40];
    std::snprintf(name, sizeof(name), "fir_convolve n=%zu", n);
    std::printf("%-24s %12.2f %12.2f %7.2fx %10s\n", name, ts * 1e3, tp * 1e3,
                ts / tp, same ? "yes" : "NO");
  }

  for (std::size_t n : {std::size_t{1} << 16, std::size_t{1} << 18,
                        std::size_t{1} << 20}) {
    std::vector<double> x = random_signal(n, 43);
    const double ratio = 0.31;
    const std::size_t out_len = static_cast<std::size_t>(n * ratio);
    std::vector<double> a, b;
    double ts = time_best_of(3, [&] { a = kernels::resample_serial(x, ratio, out_len); });
    double tp = time_best_of(3, [&] { b = kernels::resample_parallel(x, ratio, out_len); });
    bool same = a == b;
    if (!same) ++mismatches;
    char name[40];
    std::snprintf(name, sizeof(name), "resample n=%zu", n);
    std::printf("%-24s %12.2f %12.2f %7.2fx %10s\n", name, ts * 1e3, tp * 1e3,
                ts / tp, same ? "yes" : "NO");
  }

  std::printf("workers=%d mismatches=%d\n", num_jobs(), mismatches);
  return mismatches == 0 ? 0 : 1;
}
