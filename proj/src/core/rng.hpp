#pragma once

#include <cstdint>
#include <limits>

namespace ebmut {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Key for an independent stream identified by (seed, index, lane).
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index, std::uint64_t lane = 0) {
    std::uint64_t k = splitmix64(seed ^ 0x6A09E667F3BCC908ULL);
    k = splitmix64(k ^ (index * 0xD1B54A32D192ED03ULL));
    return splitmix64(k ^ (lane * 0x8CB92BA72F3D8DD7ULL));
}

// Maps 64 random bits to a double in the open interval (0, 1).
inline double bits_to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Counter-based uniform draw: the same (seed, index, lane) always gives the
// same value, regardless of evaluation order or thread.
inline double counter_uniform(std::uint64_t seed, std::uint64_t index, std::uint64_t lane = 0) {
    return bits_to_unit(splitmix64(stream_key(seed, index, lane)));
}

// A UniformRandomBitGenerator over a counter-keyed stream. Each (seed, index)
// pair owns its own sequence, so per-position generation is order independent.
class CounterStream {
public:
    using result_type = std::uint64_t;

    CounterStream(std::uint64_t seed, std::uint64_t index, std::uint64_t lane = 0)
        : key_(stream_key(seed, index, lane)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

    double uniform() { return bits_to_unit((*this)()); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace ebmut
