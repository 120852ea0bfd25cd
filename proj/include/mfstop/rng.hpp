#pragma once

#include <cstdint>
#include <limits>

namespace mfstop {

/// Independent stream families. Distinct kinds never share counters.
enum class StreamKind : std::uint64_t {
    initial = 1,
    idiosyncratic = 2,
    common = 3,
    stopping = 4,
    market = 5,
    sampling = 6,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Counter-based generator keyed by (seed, kind, path, agent, time).
///
/// Every key yields its own stream, so results do not depend on which thread
/// evaluates which path. Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, StreamKind kind, std::uint64_t path = 0,
               std::uint64_t agent = 0, std::uint64_t time = 0) noexcept {
        std::uint64_t h = splitmix64(seed);
        h = splitmix64(h ^ static_cast<std::uint64_t>(kind));
        h = splitmix64(h ^ path);
        h = splitmix64(h ^ (agent * 0xD1B54A32D192ED03ULL));
        key_ = splitmix64(h ^ (time * 0xABC98388FB8FAC03ULL));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return splitmix64(key_ + 0x632BE59BD9B4E019ULL * ++counter_); }

    /// Uniform on the open interval (0,1).
    double uniform() noexcept {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace mfstop
