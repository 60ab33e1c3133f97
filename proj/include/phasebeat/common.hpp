#pragma once
// Shared error taxonomy, seeding helpers, and version tag.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace phasebeat {

inline constexpr const char* version_string = "0.1.0";

// Base class for all library failures.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad arguments, malformed files, inconsistent configuration. CLI maps this to exit code 2.
struct value_error : error {
    using error::error;
};

// Data-dependent numeric failure: zero variance, empty extrema set, no dominant frequency.
struct numeric_error : error {
    using error::error;
};

// Non-finite loss or diverged optimizer state. CLI maps this to exit code 1.
struct train_error : error {
    using error::error;
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw value_error(msg);
}

// splitmix64: cheap, well-mixed 64-bit permutation used to derive independent
// sub-seeds (per subject, per window) from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derived streams differ whenever either input differs.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base + 0x632be59bd9b4e019ULL * splitmix64(stream));
}

}  // namespace phasebeat
