#pragma once

#include <array>
#include <cstdint>

namespace qsdlab {

/// Philox4x32-10 block function (Salmon et al., counter-based).
/// Stateless: the same (counter, key) always maps to the same block.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// 64-bit finalizer used for stream-id derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// A reproducible random stream identified by (seed, stream_id).
///
/// The seed is the Philox key; the stream id occupies the upper half of the
/// counter and the draw index the lower half, so two streams never share a
/// block. Child streams are derived from (stream_id, index) only, which makes
/// trajectory i of a batch independent of the batch size and of the thread
/// that simulates it.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Independent stream for sub-task `index` (trajectory, particle, epoch...).
    RngStream child(std::uint64_t index) const noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Exponential with the given rate (> 0).
    double exponential(double rate) noexcept;
    /// Standard normal (Box-Muller, second variate cached).
    double normal() noexcept;
    /// Uniform integer in [0, n), n > 0, unbiased.
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t block_counter_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffered_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

} // namespace qsdlab
