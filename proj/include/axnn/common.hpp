#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace axnn {

// Thrown when an internal invariant breaks (CLI maps this to exit code 2,
// ordinary std::runtime_error / invalid_argument to exit code 1).
struct internal_error : std::logic_error {
    using std::logic_error::logic_error;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Order-sensitive key mixer used everywhere a deterministic stream of
// randomness is derived from structured keys (seeds, layer ids, element
// indices). mix(a,b) != mix(b,a).
inline uint64_t mix(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (splitmix64(b) + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return mix(mix(a, b), c); }
inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d) { return mix(mix(a, b, c), d); }
inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d, uint64_t e) { return mix(mix(a, b, c, d), e); }

// Small deterministic generator. Not std::mt19937 so that trajectories are
// bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0xa076'1d64'78bd'642full)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // [0, 1)
    float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    // [0, n)
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
};

// Operation counters: observability hooks used by the cadence / purity /
// cost assertions and the bench subcommand. Single-threaded toolkit, plain
// globals are fine.
struct Counters {
    long long exact_conv_calls = 0;
    long long exact_linear_calls = 0;
    long long sc_kernel_calls = 0;
    long long am_kernel_calls = 0;
    long long analog_kernel_calls = 0;
    long long proxy_act_calls = 0;
    long long inject_calls = 0;
    long long type1_calibrations = 0;
    long long type2_calibrations = 0;
    long long checkpoint_recomputes = 0;

    void reset() { *this = Counters{}; }
};

inline Counters& counters() {
    static Counters c;
    return c;
}

inline std::string fnv1a_hex(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

}  // namespace axnn
