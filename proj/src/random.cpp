#include "obsr/random.hpp"

#include <cmath>
#include <numbers>

namespace obsr {

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return derive_seed(seed, h);
}

std::uint64_t CounterRng::below(std::uint64_t bound) noexcept {
    // reject the top partial block so every residue is equally likely
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
}

double CounterRng::normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace obsr
