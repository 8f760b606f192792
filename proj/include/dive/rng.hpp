#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "dive/tensor.hpp"

namespace dive {

// Every stochastic draw in the pipeline derives from a single config seed.
// Sub-streams are keyed by purpose strings so adding a consumer never
// perturbs the draws of another.
inline uint64_t derive_seed(uint64_t seed, std::string_view purpose) {
    // FNV-1a over the purpose string, mixed with the base seed.
    uint64_t h = 1469598103934665603ull;
    for (char c : purpose) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

inline std::mt19937_64 make_rng(uint64_t seed, std::string_view purpose) {
    return std::mt19937_64(derive_seed(seed, purpose));
}

inline Tensor gaussian_tensor(std::vector<int64_t> shape, std::mt19937_64& rng,
                              float stddev = 1.0f) {
    Tensor t(std::move(shape));
    std::normal_distribution<float> dist(0.0f, stddev);
    for (float& v : t.data) v = dist(rng);
    return t;
}

inline Tensor uniform_tensor(std::vector<int64_t> shape, std::mt19937_64& rng,
                             float lo = 0.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<float> dist(lo, hi);
    for (float& v : t.data) v = dist(rng);
    return t;
}

}  // namespace dive
