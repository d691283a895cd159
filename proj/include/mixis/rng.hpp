#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace mixis {

// Philox4x32-10 counter-based generator (Salmon et al. constants) with
// hierarchical stream derivation. A stream is identified by a 64-bit key
// (from the top-level seed) plus a 64-bit stream id occupying the high
// counter words; the low words count draws. Child streams hash the parent
// id with a child index, so (seed, replicate, stratum, ...) paths map to
// statistically independent streams no matter which thread runs them.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : RngStream(seed, 0x9e3779b97f4a7c15ull) {}

    // Deterministic child derivation; `index` is the position of the child
    // within this stream's namespace (replicate number, stratum, ...).
    RngStream child(std::uint64_t index) const {
        return RngStream(seed_, mix64(stream_id_ ^ mix64(index + 0x7f4a7c15u)));
    }

    std::uint32_t next_u32() {
        if (buffer_pos_ == 4) {
            refill();
            buffer_pos_ = 0;
        }
        return buffer_[buffer_pos_++];
    }

    std::uint64_t next_u64() {
        std::uint64_t lo = next_u32();
        std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on [0, 1) with 53 random bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; the second value of each pair is
    // cached so consecutive calls stay cheap and fully deterministic.
    double next_normal() {
        if (have_cached_normal_) {
            have_cached_normal_ = false;
            return cached_normal_;
        }
        // Shift into (0,1] so the log argument is never zero.
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = next_uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 6.283185307179586476925286766559 * u2;
        cached_normal_ = radius * std::sin(angle);
        have_cached_normal_ = true;
        return radius * std::cos(angle);
    }

    std::uint64_t stream_id() const noexcept { return stream_id_; }

    // One 10-round Philox4x32 block; public so known-answer vectors can be
    // checked without going through the stream interface.
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> c,
                                              std::array<std::uint32_t, 2> key) noexcept {
        std::uint32_t k0 = key[0];
        std::uint32_t k1 = key[1];
        for (int round = 0; round < 10; ++round) {
            std::uint32_t hi0, lo0, hi1, lo1;
            mulhilo(0xD2511F53u, c[0], hi0, lo0);
            mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
            c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return c;
    }

  private:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_id_(stream_id) {
        key_ = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    }

    // SplitMix64 finalizer; full-avalanche 64->64 mixing for id derivation.
    static std::uint64_t mix64(std::uint64_t x) noexcept {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                        std::uint32_t& lo) noexcept {
        std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        hi = static_cast<std::uint32_t>(p >> 32);
        lo = static_cast<std::uint32_t>(p);
    }

    void refill() {
        buffer_ = block({static_cast<std::uint32_t>(draw_counter_),
                         static_cast<std::uint32_t>(draw_counter_ >> 32),
                         static_cast<std::uint32_t>(stream_id_),
                         static_cast<std::uint32_t>(stream_id_ >> 32)},
                        key_);
        ++draw_counter_;
    }

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::array<std::uint32_t, 2> key_{};
    std::uint64_t draw_counter_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffer_pos_ = 4;
    double cached_normal_ = 0.0;
    bool have_cached_normal_ = false;
};

}  // namespace mixis
