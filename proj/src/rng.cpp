#include "clusterdr/rng.hpp"

#include <cmath>
#include <numbers>

namespace clusterdr {

namespace {

constexpr std::uint64_t kPhiloxMultiplier = 0xD2B74407B1CE6E93ULL;
constexpr std::uint64_t kPhiloxWeyl = 0x9E3779B97F4A7C15ULL;

__extension__ using uint128 = unsigned __int128;

}  // namespace

std::array<std::uint64_t, 2> philox2x64(std::array<std::uint64_t, 2> counter, std::uint64_t key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) key += kPhiloxWeyl;
        const uint128 product =
            static_cast<uint128>(kPhiloxMultiplier) * counter[0];
        const auto hi = static_cast<std::uint64_t>(product >> 64);
        const auto lo = static_cast<std::uint64_t>(product);
        counter = {hi ^ key ^ counter[1], lo};
    }
    return counter;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_id(StreamDomain domain, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(domain));
    h = splitmix64(h ^ a);
    return splitmix64(h ^ b);
}

std::uint64_t RandomStream::next_u64() {
    if (buffered_ == 0) {
        buffer_ = philox2x64({stream_, block_++}, key_);
        buffered_ = 2;
    }
    return buffer_[static_cast<std::size_t>(2 - buffered_--)];
}

double RandomStream::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() {
    // Box-Muller, one variate per pair of uniforms.
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t RandomStream::uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
    const auto scaled = static_cast<std::uint64_t>(
        (static_cast<uint128>(next_u64()) * range) >> 64);
    return lo + static_cast<std::int64_t>(scaled);
}

}  // namespace clusterdr
