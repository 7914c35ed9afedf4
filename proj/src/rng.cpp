// SPDX-License-Identifier: Apache-2.0
#include "pnoma/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "pnoma/errors.hpp"
#include "pnoma/numcore.hpp"

namespace pnoma {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(splitmix64(seed ^ splitmix64(stream_id))) {}

RngStream RngStream::fork(std::uint64_t sub) const {
    return RngStream(seed_, splitmix64(stream_id_ ^ splitmix64(sub + 0x632BE59BD9B4E019ULL)));
}

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    // u1 in (0, 1] keeps the logarithm finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

std::size_t RngStream::below(std::size_t n) {
    if (n == 0) throw ContractViolation("RngStream::below: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return static_cast<std::size_t>(v % bound);
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    // Fisher-Yates, highest index first.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = below(i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

Tensor sample_gaussian(RngStream& stream, const Shape& shape, double mean, double stddev) {
    if (!(stddev >= 0.0)) throw ContractViolation("sample_gaussian: stddev must be non-negative");
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = mean + stddev * stream.normal();
    return Tensor::from(shape, std::move(v));
}

}  // namespace pnoma
