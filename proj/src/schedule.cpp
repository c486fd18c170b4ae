#include "fvdm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fvdm {

void NoiseSchedule::validate() const
{
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw ScheduleError("schedule horizon must be positive");
    }
    if (!(beta_min >= 0.0) || !(beta_max >= beta_min) || !std::isfinite(beta_max)) {
        throw ScheduleError("schedule requires 0 <= beta_min <= beta_max");
    }
    if (!(t_min > 0.0) || !(t_min < horizon)) {
        throw ScheduleError("schedule t_min must lie in (0, horizon)");
    }
}

namespace {

void require_time(const NoiseSchedule& s, double t)
{
    if (!(t >= 0.0 && t <= s.horizon)) {
        throw ScheduleError("time " + std::to_string(t) + " outside [0, " + std::to_string(s.horizon) + "]");
    }
}

}  // namespace

double NoiseSchedule::beta(double t) const
{
    require_time(*this, t);
    return beta_min + (beta_max - beta_min) * t / horizon;
}

double NoiseSchedule::accumulated_beta(double t) const
{
    require_time(*this, t);
    return beta_min * t + 0.5 * (beta_max - beta_min) * t * t / horizon;
}

double accumulated_beta(const NoiseSchedule& s, double t)
{
    return s.accumulated_beta(t);
}

MarginalCoeffs marginal_coeffs(const NoiseSchedule& s, double t)
{
    const double b = s.accumulated_beta(t);
    return {std::exp(-0.5 * b), std::sqrt(-std::expm1(-b))};
}

double alpha_bar(const NoiseSchedule& s, double t)
{
    return std::exp(-s.accumulated_beta(t));
}

bool Vtv::is_constant() const
{
    return std::adjacent_find(times_.begin(), times_.end(), std::not_equal_to<>()) == times_.end();
}

void Vtv::validate(const NoiseSchedule& s) const
{
    for (std::size_t i = 0; i < times_.size(); ++i) {
        if (!(times_[i] >= 0.0 && times_[i] <= s.horizon)) {
            throw ScheduleError("vtv entry " + std::to_string(i) + " = " + std::to_string(times_[i]) +
                                " outside [0, horizon]");
        }
    }
}

void PtssConfig::validate() const
{
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ScheduleError("ptss probability must lie in [0, 1]");
    }
}

PtssSample ptss_sample(const PtssConfig& cfg, const NoiseSchedule& s, std::size_t n_frames, RngStream& rng)
{
    cfg.validate();
    if (n_frames < 1) {
        throw ScheduleError("ptss_sample needs at least one frame");
    }
    auto draw = [&] { return s.t_min + (s.horizon - s.t_min) * rng.uniform(); };
    PtssSample out;
    // The branch draw is always consumed so that p does not shift later streams.
    out.per_frame = rng.uniform() < cfg.p;
    std::vector<double> times(n_frames);
    if (out.per_frame) {
        for (auto& t : times) t = draw();
    } else {
        std::fill(times.begin(), times.end(), draw());
    }
    out.tau = Vtv(std::move(times));
    return out;
}

std::vector<double> time_grid(const NoiseSchedule& s, std::size_t steps)
{
    if (steps < 1) {
        throw ScheduleError("time grid needs at least one step");
    }
    std::vector<double> grid(steps + 1);
    for (std::size_t i = 0; i < steps; ++i) {
        const std::size_t k = steps - i;
        grid[i] = k == steps ? s.horizon : s.t_min + (s.horizon - s.t_min) * static_cast<double>(k) / steps;
    }
    grid[steps] = 0.0;
    return grid;
}

}  // namespace fvdm
