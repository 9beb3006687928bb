#pragma once

#include <cstdint>

namespace smoothtest {

// Counter-based stream generator (Philox 4x32-10, Salmon et al. 2011).
// The stream for (seed, index i) is statistically independent of the stream
// for (seed, j) with j != i, so replicates can be split across any number of
// workers and still produce bit-identical results.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // Uniform on the open interval (0, 1); never returns 0 or 1.
    double uniform();

    // Standard normal via the inverse-CDF method (one uniform per draw).
    double normal();

    // Exponential with rate 1.
    double exponential();

    // Draws an index in [0, k) with the given cumulative weights
    // (cum[k-1] == total mass).
    int categorical(const double* cum, int k);

private:
    void refill();

    std::uint32_t key_[2];
    std::uint32_t stream_[2];
    std::uint64_t block_ = 0;
    std::uint32_t out_[4] = {0, 0, 0, 0};
    int have_ = 0;
};

// Derives a child seed from a master seed and an index (splitmix64 mixing);
// used to give nested simulations (size studies, power studies) disjoint
// seed spaces.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace smoothtest
