#pragma once

#include <array>
#include <cstdint>

namespace clusterdr {

/// Philox-2x64-10 block function (Salmon et al., SC'11): a counter-based
/// generator mapping (counter, key) to two 64-bit outputs.
std::array<std::uint64_t, 2> philox2x64(std::array<std::uint64_t, 2> counter, std::uint64_t key);

std::uint64_t splitmix64(std::uint64_t x);

/// Stream identifiers used across the library. A stream is addressed by
/// (domain, a, b): for simulated data a = replication, b = cluster.
enum class StreamDomain : std::uint64_t {
    Dataset = 1,
    Oracle = 2,
    Bootstrap = 3,
    Folds = 4,
};

std::uint64_t stream_id(StreamDomain domain, std::uint64_t a, std::uint64_t b = 0);

/// Sequential draws from one Philox stream: key = seed, counter = (stream,
/// block index). Draw n of a stream is fixed by (seed, stream, n) alone, so
/// streams can be consumed on any thread in any order.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream) : key_(seed), stream_(stream) {}

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform();
    double normal();
    bool bernoulli(double p) { return uniform() < p; }
    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

private:
    std::uint64_t key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
};

}  // namespace clusterdr
