#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace psl {

/// Deterministic random stream. All randomness in the engine flows through
/// this wrapper so that results are bit-reproducible across platforms:
/// mt19937_64 is fully specified by the standard and the uniform mappings
/// below avoid the implementation-defined std distributions.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }

    /// Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n) {
        const auto wide = static_cast<unsigned __int128>(next_u64()) *
                          static_cast<unsigned __int128>(n);
        return static_cast<int>(wide >> 64);
    }

    bool coin(double p) { return uniform(0.0, 1.0) < p; }

    /// Derive an independent sub-stream seed, e.g. mix(seed, epoch).
    static uint64_t mix(uint64_t seed, uint64_t stream) {
        return splitmix64(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
    }

    static uint64_t splitmix64(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 gen_;
};

/// Partial Fisher-Yates: k distinct indices drawn from [0, n).
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
        const int j = i + rng.uniform_int(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace psl
