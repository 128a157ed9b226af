#pragma once

#include <cstdint>

namespace excursion {

// SplitMix64 finalizer; bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Counter-based uniform on the open interval (0,1). The value is a pure
// function of the key, so draws can be generated in any order or on any
// worker and still reproduce bit-for-bit.
double keyed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                     std::uint64_t row) noexcept;

// Standard normal obtained by inverting keyed_uniform.
double keyed_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                    std::uint64_t row);

} // namespace excursion
