#include "smoothtest/rng.hpp"

#include <cmath>

#include "smoothtest/numerics.hpp"

namespace smoothtest {

namespace {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
    const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(prod);
    hi = static_cast<std::uint32_t>(prod >> 32);
}

inline void philox_round(std::uint32_t ctr[4], const std::uint32_t key[2]) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mul_hi_lo(kPhiloxM4x32A, ctr[0], lo0, hi0);
    mul_hi_lo(kPhiloxM4x32B, ctr[2], lo1, hi1);
    const std::uint32_t c1 = ctr[1], c3 = ctr[3];
    ctr[0] = hi1 ^ c1 ^ key[0];
    ctr[1] = lo1;
    ctr[2] = hi0 ^ c3 ^ key[1];
    ctr[3] = lo0;
}

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) {
    key_[0] = static_cast<std::uint32_t>(seed);
    key_[1] = static_cast<std::uint32_t>(seed >> 32);
    stream_[0] = static_cast<std::uint32_t>(stream);
    stream_[1] = static_cast<std::uint32_t>(stream >> 32);
}

void RngStream::refill() {
    std::uint32_t ctr[4] = {static_cast<std::uint32_t>(block_),
                            static_cast<std::uint32_t>(block_ >> 32), stream_[0], stream_[1]};
    std::uint32_t key[2] = {key_[0], key_[1]};
    for (int round = 0; round < 10; ++round) {
        philox_round(ctr, key);
        key[0] += kPhiloxW32A;
        key[1] += kPhiloxW32B;
    }
    out_[0] = ctr[0];
    out_[1] = ctr[1];
    out_[2] = ctr[2];
    out_[3] = ctr[3];
    have_ = 4;
    ++block_;
}

std::uint32_t RngStream::next_u32() {
    if (have_ == 0) refill();
    return out_[4 - have_--];
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
}

double RngStream::uniform() {
    // 53 random bits, centered into (0,1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    return norm_quantile(uniform());
}

double RngStream::exponential() {
    return -std::log(uniform());
}

int RngStream::categorical(const double* cum, int k) {
    const double u = uniform() * cum[k - 1];
    for (int i = 0; i < k - 1; ++i)
        if (u < cum[i]) return i;
    return k - 1;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 0x7F4A7C15u));
}

}  // namespace smoothtest
