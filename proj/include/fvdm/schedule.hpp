#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fvdm/rng.hpp"

namespace fvdm {

class ScheduleError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Variance-preserving schedule with a linear rate beta(t) on [0, horizon].
struct NoiseSchedule {
    double beta_min = 0.1;
    double beta_max = 20.0;
    double horizon = 1.0;
    double t_min = 1e-3;

    void validate() const;

    double beta(double t) const;
    /// Integral of beta over [0, t].
    double accumulated_beta(double t) const;
};

struct MarginalCoeffs {
    double mean_coef = 1.0;  // exp(-B(t)/2)
    double std = 0.0;        // sqrt(1 - exp(-B(t)))
};

double accumulated_beta(const NoiseSchedule& s, double t);
MarginalCoeffs marginal_coeffs(const NoiseSchedule& s, double t);
/// Squared mean coefficient, the cumulative signal fraction.
double alpha_bar(const NoiseSchedule& s, double t);

/// Per-frame diffusion times. A frame is frozen iff its time is exactly 0.
class Vtv {
public:
    Vtv() = default;
    explicit Vtv(std::vector<double> times) : times_(std::move(times)) {}
    static Vtv broadcast(double t, std::size_t n_frames) { return Vtv(std::vector<double>(n_frames, t)); }

    std::size_t size() const { return times_.size(); }
    double operator[](std::size_t i) const { return times_[i]; }
    double& operator[](std::size_t i) { return times_[i]; }
    const std::vector<double>& times() const { return times_; }

    bool frozen(std::size_t i) const { return times_.at(i) == 0.0; }
    bool is_constant() const;

    /// Throws unless every entry lies in [0, horizon].
    void validate(const NoiseSchedule& s) const;

    friend bool operator==(const Vtv&, const Vtv&) = default;

private:
    std::vector<double> times_;
};

struct PtssConfig {
    double p = 0.2;

    void validate() const;
};

struct PtssSample {
    Vtv tau;
    bool per_frame = false;  // true when the distinct-timesteps branch fired
};

/// With probability p every frame draws its own Uniform(t_min, T) time;
/// otherwise one draw is shared by all frames.
PtssSample ptss_sample(const PtssConfig& cfg, const NoiseSchedule& s, std::size_t n_frames, RngStream& rng);

/// K+1 descending times: T at index 0, uniform down to t_min + (T - t_min)/K,
/// then exactly 0 at index K.
std::vector<double> time_grid(const NoiseSchedule& s, std::size_t steps);

}  // namespace fvdm
