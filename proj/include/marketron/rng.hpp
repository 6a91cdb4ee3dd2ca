#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace marketron {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Counter-based generator: output i is a pure function of (key, i), so any
// stream can be regenerated independently of scheduling order.
class Stream {
public:
    explicit Stream(std::uint64_t key = 0) : key_(key) {}

    std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

    // Uniform on the open interval (0, 1).
    double uniform() { return ((next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = mix64(seed ^ 0x6A09E667F3BCC909ULL);
    for (std::uint64_t id : ids) h = mix64(h ^ mix64(id + kGolden));
    return h;
}

inline Stream make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    return Stream(derive_key(seed, ids));
}

// Stream-id tags keep unrelated consumers of one seed apart.
namespace tag {
inline constexpr std::uint64_t path = 1;
inline constexpr std::uint64_t particle = 2;
inline constexpr std::uint64_t resample = 3;
inline constexpr std::uint64_t prior = 4;
inline constexpr std::uint64_t optimizer = 5;
inline constexpr std::uint64_t rolling = 6;
} // namespace tag

} // namespace marketron
