#include "fvdm/rng.hpp"

#include <cmath>
#include <numbers>

namespace fvdm {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo)
{
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::array<std::uint32_t, 4> block(const RngStream& s)
{
    return philox4x32({static_cast<std::uint32_t>(s.counter), static_cast<std::uint32_t>(s.counter >> 32),
                       static_cast<std::uint32_t>(s.stream_id), static_cast<std::uint32_t>(s.stream_id >> 32)},
                      {static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32)});
}

// 53-bit uniform in (0, 1): never exactly 0, so log() is safe.
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo)
{
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key)
{
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

double RngStream::uniform()
{
    const auto b = block(*this);
    ++counter;
    return to_open_unit(b[0], b[1]);
}

double RngStream::normal()
{
    const auto b = block(*this);
    ++counter;
    const double u1 = to_open_unit(b[0], b[1]);
    const double u2 = to_open_unit(b[2], b[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n)
{
    if (n == 0) {
        throw NumericsError("below(0) is empty");
    }
    const auto u = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return u < n ? u : n - 1;
}

RngStream RngStream::substream(std::uint64_t key) const
{
    return RngStream{seed, splitmix64(stream_id ^ splitmix64(key)), 0};
}

Tensor gaussian(RngStream& rng, const Shape& shape)
{
    Tensor t(shape);
    for (double& v : t.data()) {
        v = rng.normal();
    }
    return t;
}

}  // namespace fvdm
