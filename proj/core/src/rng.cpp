#include "fedskew/rng.hpp"

#include <cmath>
#include <numbers>

namespace fedskew {

namespace {

// splitmix64 finalizer; scrambles correlated inputs into independent seeds.
uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view text) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

uint64_t derive_seed(uint64_t parent, std::string_view component) {
    return mix64(parent ^ mix64(fnv1a(component)));
}

uint64_t derive_seed(uint64_t parent, std::string_view component, uint64_t index) {
    return mix64(derive_seed(parent, component) ^ mix64(index));
}

double Rng::normal() {
    // u1 shifted away from zero so log stays finite.
    double u1 = (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    // Multiply-shift range reduction; bias is negligible for span << 2^64.
    unsigned __int128 product = static_cast<unsigned __int128>(engine_()) * span;
    return lo + static_cast<int>(product >> 64);
}

} // namespace fedskew
