#pragma once

#include <array>
#include <cstdint>

#include "fvdm/tensor.hpp"

namespace fvdm {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Counter-based random stream. Draw number `counter` of stream
/// (seed, stream_id) is a pure function of the triple, so substreams can be
/// evaluated in any order without changing results.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t counter = 0;

    /// Uniform in the open interval (0, 1); consumes one draw.
    double uniform();
    /// Standard normal; consumes one draw.
    double normal();
    /// Uniform integer in [0, n); consumes one draw.
    std::uint64_t below(std::uint64_t n);

    /// A fresh stream (counter 0) whose id is a hash of this id and `key`.
    RngStream substream(std::uint64_t key) const;

    friend bool operator==(const RngStream&, const RngStream&) = default;
};

/// Standard normal tensor; advances `rng.counter` by the element count.
Tensor gaussian(RngStream& rng, const Shape& shape);

}  // namespace fvdm
