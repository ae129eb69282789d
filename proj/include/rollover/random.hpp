#pragma once

// Counter-based random streams. Every Monte-Carlo path owns the stream keyed
// by (seed, path index), so results do not depend on scheduling.

#include <array>
#include <cstdint>
#include <initializer_list>

#include <boost/random/normal_distribution.hpp>

namespace rollover {

/// Philox4x32-10 block function (Salmon et al., SC'11).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter apply(Counter ctr, Key key);
};

/// Deterministic seed derivation: mixes a base seed with a list of indices.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> indices);

/// 32-bit words of the Philox stream (seed, stream id): counter = (block, stream).
class PhiloxBits {
public:
    using result_type = std::uint32_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xFFFFFFFFu; }

    PhiloxBits(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

    result_type operator()() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t blocks_used() const { return block_; }

private:
    void refill() {
        buf_ = Philox4x32::apply({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                  static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                                 key_);
        ++block_;
        pos_ = 0;
    }

    Philox4x32::Key key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    Philox4x32::Counter buf_{};
    int pos_ = 4;
};

/// Standard normal draws (Boost ziggurat) on a Philox stream; `negate`
/// flips every draw, giving the antithetic partner of the same stream.
class GaussianStream {
public:
    GaussianStream(std::uint64_t seed, std::uint64_t stream, bool negate = false)
        : bits_(seed, stream), sign_(negate ? -1.0 : 1.0) {}

    double normal() { return sign_ * normal_(bits_); }

    std::uint64_t blocks_used() const { return bits_.blocks_used(); }

private:
    PhiloxBits bits_;
    boost::random::normal_distribution<double> normal_;
    double sign_;
};

}  // namespace rollover
