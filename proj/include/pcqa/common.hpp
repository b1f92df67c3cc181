#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcqa {

using Vec = std::vector<double>;

// Exit-code domains used by the CLI: 2 config, 3 data, 4 numeric.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

// Deterministic stream seeding: combine (seed, tag, index) into one 64-bit state.
inline std::uint64_t mix_seed(std::uint64_t seed, const std::string& tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(&seed, sizeof(seed));
    h = fnv1a64(tag, h);
    h = fnv1a64(&index, sizeof(index), h);
    return h;
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform double in [0,1). Derived straight from the engine output so the
    // byte-level stream does not depend on the standard library's
    // distribution implementation.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
};

inline float to_f32(double x) { return static_cast<float>(x); }

inline void round_to_f32(Vec& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace pcqa
