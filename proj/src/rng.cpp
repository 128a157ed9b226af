#include "excursion/rng.hpp"

#include "excursion/normdist.hpp"

namespace excursion {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double keyed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                     std::uint64_t row) noexcept {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ (stream * 0xd6e8feb86659fd93ULL));
    h = mix64(h ^ index);
    h = mix64(h ^ (row * 0xa0761d6478bd642fULL));
    // 53 random bits, offset by half a step: never 0, never 1.
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

double keyed_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                    std::uint64_t row) {
    return norm_quantile(keyed_uniform(seed, stream, index, row));
}

} // namespace excursion
