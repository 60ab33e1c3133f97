// Seed-controlled parameter initialization shared by the networks.

#pragma once

#include <cmath>
#include <random>

#include "phasebeat/tensor.hpp"

namespace phasebeat::detail {

// Centered uniform fan-in init, U(-gain/sqrt(fan_in), +gain/sqrt(fan_in)).
// Weights use gain sqrt(6) so the variance through a hardswish layer stays
// near one (the small-signal slope of hardswish is 1/2); biases use gain 1.
inline constexpr double weight_gain = 2.449489742783178;  // sqrt(6)

template <typename S>
void fill_uniform(tensor<S>& t, std::int64_t fan_in, std::mt19937_64& rng, double gain = 1.0) {
    const double bound = gain / std::sqrt(double(fan_in));
    std::uniform_real_distribution<double> d(-bound, bound);
    for (auto& v : t.value_mut()) v = static_cast<S>(d(rng));
}

// Mirrors a kernel axis of extent k whose trailing dimensions multiply to
// `inner`, making every kernel an even-symmetric FIR tap set along time. A
// symmetric kernel has zero group delay, so at initialization neither head
// imposes a phase shift; only the time-domain loss on the acral head breaks
// the symmetry during training.
template <typename S>
void symmetrize_axis(tensor<S>& t, std::int64_t k, std::int64_t inner) {
    auto& v = t.value_mut();
    const std::int64_t rows = static_cast<std::int64_t>(v.size()) / (k * inner);
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < k / 2; ++i)
            for (std::int64_t j = 0; j < inner; ++j) {
                auto& a = v[static_cast<std::size_t>((r * k + i) * inner + j)];
                auto& b = v[static_cast<std::size_t>((r * k + (k - 1 - i)) * inner + j)];
                const S m = (a + b) / S(2);
                a = b = m;
            }
}

}  // namespace phasebeat::detail
