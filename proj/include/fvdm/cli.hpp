#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fvdm/diffusion.hpp"
#include "fvdm/eval.hpp"
#include "fvdm/gaussian.hpp"

namespace fvdm {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 2;
inline constexpr int divergence = 3;
inline constexpr int tolerance = 4;
inline constexpr int insufficient = 5;
}  // namespace exit_code

enum class OracleCase { unconditional, image2video, interpolate, extend };

OracleCase parse_oracle_case(const std::string& name);
const char* oracle_case_name(OracleCase c);

struct OracleOptions {
    OracleCase which = OracleCase::unconditional;
    std::size_t samples = 20000;
    std::size_t steps = 1000;
    SamplerKind sampler = SamplerKind::ancestral;
    std::uint64_t seed = 0;
};

struct OracleResult {
    MomentReport report;          // non-frozen coordinates against their exact law
    double max_conditioning_mse = 0.0;
    double mean_tolerance = 0.05;
    double cov_tolerance = 0.15;  // 0.2 for the deterministic sampler
    std::size_t min_samples = 0;  // below this, Monte-Carlo error is comparable to the tolerances
    bool passed() const;
};

/// AR(1) law with N = 4, d = 2, rho = 0.9, unit variance.
GaussianVideoModel oracle_law();

/// Samples with the analytic score and compares the free frames with their
/// exact (conditional) Gaussian moments. Conditioning content is a fixed
/// draw from the law.
OracleResult run_oracle_check(const OracleOptions& opts);

/// Entry point of the command-line tool; returns the process exit code.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace fvdm
