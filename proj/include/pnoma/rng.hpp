// SPDX-License-Identifier: Apache-2.0
//
// Seeded random streams.
//
// Every stochastic call site draws from an explicit RngStream identified by a
// (seed, stream_id) pair. The engine is std::mt19937_64, whose output sequence
// is fixed by the C++ standard; it is seeded through SplitMix64 so that
// neighbouring stream ids produce unrelated states. Uniform and normal
// variates are derived here rather than through <random> distributions, whose
// algorithms are implementation-defined.
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pnoma {

/// Identifier of the generator recorded in checkpoints and manifests.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64/splitmix64-seeded/box-muller";

/// Well-known stream ids. Sub-streams are derived with RngStream::fork.
enum class StreamId : std::uint64_t {
    ParamInit = 1,
    Synthetic = 2,
    TrainTuples = 3,
    EvalTuples = 4,
    EpochShuffle = 5,
    TrainChannel = 6,
    ValChannel = 7,
    Codebook = 8,
    DataSplit = 9,
    EvalChannel = 10,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);
    RngStream(std::uint64_t seed, StreamId id) : RngStream(seed, static_cast<std::uint64_t>(id)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Child stream whose id is a hash of this stream's id and `sub`. Does not
    /// advance this stream.
    RngStream fork(std::uint64_t sub) const;

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via the Box-Muller transform.
    double normal();
    /// Uniform integer in [0, n), unbiased (rejection sampling).
    std::size_t below(std::size_t n);

    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace pnoma
