#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace landet {

// Error taxonomy shared across the library. Kind lets callers (and tests)
// distinguish failure modes without string matching.
struct Error : std::runtime_error {
    enum class Kind {
        shape_mismatch,
        invalid_argument,
        numeric,       // NaN/Inf surfaced during forward/backward
        bad_magic,
        version_mismatch,
        truncated,
        format,        // malformed file contents
        io,            // filesystem level failure
        empty_result,
    };

    Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

[[noreturn]] inline void fail(Error::Kind k, const std::string& msg) {
    throw Error(k, msg);
}

// Deterministic RNG. std::mt19937 is portable, but the std distributions are
// not; the float draws here are pinned so identical seeds give identical
// streams on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    // splitmix64 core
    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 24 bits of mantissa.
    float uniform() { return float(next_u64() >> 40) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one value per call, the pair partner is cached.
    float normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        float r = std::sqrt(-2.0f * std::log(u1));
        float a = 6.28318530717958647692f * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates over indices, deterministic given the stream position.
    void shuffle(std::vector<size_t>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream (e.g. per-epoch, per-sample).
    Rng fork(uint64_t salt) {
        return Rng(next_u64() ^ (salt * 0xd1b54a32d192ed03ull + 0x2545f4914f6cdd1dull));
    }

private:
    uint64_t state_;
    bool have_cached_ = false;
    float cached_ = 0.0f;
};

// FNV-1a 64-bit, used for artifact checksums in run manifests.
inline uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace landet
