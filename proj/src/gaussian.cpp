#include "fvdm/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "fvdm/denoiser.hpp"
#include "fvdm/linalg.hpp"

namespace fvdm {

namespace {

Tensor submatrix(const Tensor& a, std::span<const std::size_t> rows, std::span<const std::size_t> cols)
{
    Tensor out({rows.size(), cols.size()});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) out.at(r, c) = a.at(rows[r], cols[c]);
    }
    return out;
}

// Diffused law of the whole clip: N(A m, A C A + S^2) with per-frame A, S.
GaussianLaw diffused_law(const GaussianVideoModel& model, const NoiseSchedule& s, const Vtv& tau)
{
    const std::size_t n = model.dim(), d = model.frame_dim;
    std::vector<double> a(n), var(n);
    for (std::size_t i = 0; i < model.n_frames; ++i) {
        const auto c = marginal_coeffs(s, tau[i]);
        for (std::size_t j = 0; j < d; ++j) {
            a[i * d + j] = c.mean_coef;
            var[i * d + j] = c.std * c.std;
        }
    }
    GaussianLaw law{Tensor({n}), Tensor({n, n})};
    for (std::size_t r = 0; r < n; ++r) {
        law.mean[r] = a[r] * model.mean[r];
        for (std::size_t c = 0; c < n; ++c) law.cov.at(r, c) = a[r] * model.cov.at(r, c) * a[c];
        law.cov.at(r, r) += var[r];
    }
    return law;
}

void require_inputs(const GaussianVideoModel& model, const NoiseSchedule& s, const VideoTensor& x, const Vtv& tau)
{
    if (x.n_frames() != model.n_frames || x.frame_dim() != model.frame_dim) {
        throw ModelError("clip shape does not match the Gaussian model");
    }
    if (tau.size() != model.n_frames) throw ModelError("vtv length does not match the Gaussian model");
    tau.validate(s);
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (tau[i] != 0.0 && tau[i] < s.t_min) {
            throw ModelError("oracle needs tau_i == 0 or tau_i >= t_min, frame " + std::to_string(i) + " has " +
                             std::to_string(tau[i]));
        }
    }
}

// Everything about the conditional score that depends only on tau.
struct OraclePlan {
    std::vector<std::size_t> free, frozen;  // flat coordinates
    Tensor base;                            // (A m)_free - G m_frozen
    Tensor gain;                            // G = Sigma_{free,frozen} C_frozen^-1
    Tensor precision;                       // Sigma_cond^-1
    std::vector<double> std_free;
};

OraclePlan make_plan(const GaussianVideoModel& model, const NoiseSchedule& s, const Vtv& tau)
{
    OraclePlan plan;
    std::vector<std::size_t> free_frames, frozen_frames;
    for (std::size_t i = 0; i < tau.size(); ++i) (tau.frozen(i) ? frozen_frames : free_frames).push_back(i);
    plan.free = frame_coordinates(free_frames, model.frame_dim);
    plan.frozen = frame_coordinates(frozen_frames, model.frame_dim);
    if (plan.free.empty()) return plan;

    for (auto i : free_frames) {
        const double sd = marginal_coeffs(s, tau[i]).std;
        plan.std_free.insert(plan.std_free.end(), model.frame_dim, sd);
    }
    const GaussianLaw law = diffused_law(model, s, tau);
    Tensor cond_cov = submatrix(law.cov, plan.free, plan.free);
    plan.base = Tensor({plan.free.size()});
    for (std::size_t r = 0; r < plan.free.size(); ++r) plan.base[r] = law.mean[plan.free[r]];
    if (!plan.frozen.empty()) {
        const Tensor c_ff = submatrix(law.cov, plan.frozen, plan.frozen);
        const Tensor c_fu = submatrix(law.cov, plan.frozen, plan.free);
        const Tensor x = spd_solve(c_ff, c_fu);  // C_ff^-1 C_fu
        plan.gain = transpose(x);
        cond_cov = cond_cov - matmul(transpose(c_fu), x);
        std::vector<double> m_frozen(plan.frozen.size());
        for (std::size_t r = 0; r < plan.frozen.size(); ++r) m_frozen[r] = law.mean[plan.frozen[r]];
        const Tensor shift = matvec(plan.gain, m_frozen);
        for (std::size_t r = 0; r < plan.free.size(); ++r) plan.base[r] -= shift[r];
    }
    plan.precision = spd_inverse(cond_cov);
    return plan;
}

VideoTensor apply_plan(const OraclePlan& plan, const VideoTensor& x)
{
    VideoTensor out(x.n_frames(), x.frame_dim());
    out.set_geometry(x.geometry());
    if (plan.free.empty()) return out;
    const auto flat = x.tensor().data();
    std::vector<double> resid(plan.free.size());
    for (std::size_t r = 0; r < plan.free.size(); ++r) resid[r] = flat[plan.free[r]] - plan.base[r];
    if (!plan.frozen.empty()) {
        std::vector<double> xf(plan.frozen.size());
        for (std::size_t r = 0; r < plan.frozen.size(); ++r) xf[r] = flat[plan.frozen[r]];
        const Tensor g = matvec(plan.gain, xf);
        for (std::size_t r = 0; r < plan.free.size(); ++r) resid[r] -= g[r];
    }
    // score = -P r, eps_hat = -std * score
    const Tensor pr = matvec(plan.precision, resid);
    auto dst = out.tensor().data();
    for (std::size_t r = 0; r < plan.free.size(); ++r) dst[plan.free[r]] = plan.std_free[r] * pr[r];
    return out;
}

}  // namespace

void GaussianVideoModel::validate() const
{
    const std::size_t n = dim();
    if (n == 0) throw ModelError("Gaussian model needs positive frame count and dimension");
    if (mean.shape() != Shape{n}) throw ModelError("Gaussian mean must have N*d entries");
    if (cov.shape() != Shape{n, n}) throw ModelError("Gaussian covariance must be (N*d) x (N*d)");
    mean.require_finite("Gaussian mean");
    cov.require_finite("Gaussian covariance");
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = r + 1; c < n; ++c) {
            if (std::abs(cov.at(r, c) - cov.at(c, r)) > 1e-9) throw ModelError("Gaussian covariance is not symmetric");
        }
    }
    const double lo = sym_eigen(cov).eigenvalues[0];
    if (!(lo > 1e-8)) {
        throw ModelError("Gaussian covariance smallest eigenvalue " + std::to_string(lo) + " is not above 1e-8");
    }
}

std::vector<std::size_t> frame_coordinates(std::span<const std::size_t> frames, std::size_t frame_dim)
{
    std::vector<std::size_t> out;
    out.reserve(frames.size() * frame_dim);
    for (auto f : frames) {
        for (std::size_t j = 0; j < frame_dim; ++j) out.push_back(f * frame_dim + j);
    }
    return out;
}

GaussianLaw condition_gaussian(const Tensor& mean, const Tensor& cov, std::span<const std::size_t> keep,
                               std::span<const std::size_t> given, std::span<const double> values)
{
    if (values.size() != given.size()) throw ModelError("conditioning values do not match the given coordinates");
    GaussianLaw out{Tensor({keep.size()}), submatrix(cov, keep, keep)};
    for (std::size_t r = 0; r < keep.size(); ++r) out.mean[r] = mean[keep[r]];
    if (given.empty()) return out;
    const Tensor c_gg = submatrix(cov, given, given);
    const Tensor c_gk = submatrix(cov, given, keep);
    Tensor delta({given.size()});
    for (std::size_t r = 0; r < given.size(); ++r) delta[r] = values[r] - mean[given[r]];
    const Tensor w = spd_solve(c_gg, delta);
    const Tensor x = spd_solve(c_gg, c_gk);
    const Tensor shift = matvec(transpose(c_gk), w.data());
    out.mean = out.mean + shift;
    out.cov = out.cov - matmul(transpose(c_gk), x);
    for (std::size_t r = 0; r < keep.size(); ++r) {
        for (std::size_t c = r + 1; c < keep.size(); ++c) {
            const double v = 0.5 * (out.cov.at(r, c) + out.cov.at(c, r));
            out.cov.at(r, c) = v;
            out.cov.at(c, r) = v;
        }
    }
    return out;
}

VideoTensor oracle_eps(const GaussianVideoModel& model, const NoiseSchedule& s, const VideoTensor& x, const Vtv& tau)
{
    require_inputs(model, s, x, tau);
    return apply_plan(make_plan(model, s, tau), x);
}

double diffused_log_density(const GaussianVideoModel& model, const NoiseSchedule& s, const VideoTensor& x,
                            const Vtv& tau)
{
    require_inputs(model, s, x, tau);
    const GaussianLaw law = diffused_law(model, s, tau);
    const std::size_t n = model.dim();
    Tensor r({n});
    for (std::size_t k = 0; k < n; ++k) r[k] = x.tensor()[k] - law.mean[k];
    const Tensor sol = spd_solve(law.cov, r);
    double quad = 0.0;
    for (std::size_t k = 0; k < n; ++k) quad += r[k] * sol[k];
    return -0.5 * (quad + spd_logdet(law.cov) + static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
}

GaussianOracleScore::GaussianOracleScore(GaussianVideoModel model, NoiseSchedule s)
    : model_(std::move(model)), schedule_(s)
{
    model_.validate();
    schedule_.validate();
}

VideoTensor GaussianOracleScore::evaluate(const VideoTensor& x, const Vtv& tau) const
{
    return oracle_eps(model_, schedule_, x, tau);
}

std::vector<VideoTensor> GaussianOracleScore::evaluate_batch(std::span<const VideoTensor> xs, const Vtv& tau) const
{
    std::vector<VideoTensor> out;
    out.reserve(xs.size());
    if (xs.empty()) return out;
    for (const auto& x : xs) require_inputs(model_, schedule_, x, tau);
    const OraclePlan plan = make_plan(model_, schedule_, tau);
    for (const auto& x : xs) out.push_back(apply_plan(plan, x));
    return out;
}

}  // namespace fvdm
