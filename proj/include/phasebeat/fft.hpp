#pragma once
// Iterative radix-2 FFT in double precision. Shared by the analysis-side power
// spectrum and the autodiff periodogram op (which accumulates in double and
// casts to its scalar type on the way out).

#include <complex>
#include <cstddef>
#include <vector>

#include "phasebeat/common.hpp"

namespace phasebeat {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place decimation-in-time FFT; inverse=true applies conj-transform without
// the 1/N normalization (callers scale when they need the true inverse).
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse = false) {
    const std::size_t n = a.size();
    require(is_pow2(n), "fft_pow2: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * pi / double(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

}  // namespace phasebeat
