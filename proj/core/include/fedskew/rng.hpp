#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedskew {

/// Derives a child seed from a parent seed and a component name (plus an
/// optional stream index). Every nested seed in an experiment comes from
/// this rule, so a single top-level seed pins the whole run.
uint64_t derive_seed(uint64_t parent, std::string_view component);
uint64_t derive_seed(uint64_t parent, std::string_view component, uint64_t index);

/// mt19937_64 with draw routines spelled out here instead of delegating to
/// std distributions. The engine is specified bit-exactly by the standard;
/// the distributions are not, and reproducibility across toolchains matters
/// more than the last bit of sampling efficiency.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller. Draws two uniforms per call and
    /// keeps no cached second value, so call sequences stay reproducible.
    double normal();

    /// Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int>(i - 1)));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace fedskew
