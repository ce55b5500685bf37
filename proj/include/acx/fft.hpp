// acx/fft.hpp
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

#ifndef ACX_FFT_HPP
#define ACX_FFT_HPP

#include <complex>
#include <cstddef>
#include <vector>

namespace acx {

// In-place radix-2 FFT. Size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

std::size_t next_pow2(std::size_t n);

// Full linear convolution via FFT, length a+b-1.
std::vector<double> fft_convolve(const std::vector<double>& a,
                                 const std::vector<double>& b);

// Magnitude spectrum of a real frame zero-padded to fft_size; returns
// fft_size/2 + 1 bins.
std::vector<double> magnitude_spectrum(const std::vector<double>& frame,
                                       std::size_t fft_size);

}  // namespace acx

#endif  // ACX_FFT_HPP
