#include "fvdm/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace fvdm {

std::vector<VideoTensor> ScoreFunction::evaluate_batch(std::span<const VideoTensor> xs, const Vtv& tau) const
{
    std::vector<VideoTensor> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(evaluate(x, tau));
    return out;
}

namespace {

void require_frames(const VideoTensor& x, const Vtv& tau, const char* op)
{
    if (tau.size() != x.n_frames()) {
        throw DiffusionError(std::string(op) + ": vtv length " + std::to_string(tau.size()) +
                             " does not match frame count " + std::to_string(x.n_frames()));
    }
}

void require_step(const VideoTensor& x, const Vtv& tau, const Vtv& tau_next, const VideoTensor& eps_hat,
                  const NoiseSchedule& s, const char* op)
{
    require_frames(x, tau, op);
    require_frames(x, tau_next, op);
    if (eps_hat.tensor().shape() != x.tensor().shape()) {
        throw DiffusionError(std::string(op) + ": eps_hat shape does not match x");
    }
    tau.validate(s);
    tau_next.validate(s);
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (tau_next[i] > tau[i]) {
            throw DiffusionError(std::string(op) + ": frame " + std::to_string(i) + " would move forward in time (" +
                                 std::to_string(tau[i]) + " -> " + std::to_string(tau_next[i]) + ")");
        }
    }
}

}  // namespace

const char* sampler_kind_name(SamplerKind kind)
{
    return kind == SamplerKind::ancestral ? "ddpm" : "ddim";
}

Perturbed perturb(const VideoTensor& x0, const Vtv& tau, const NoiseSchedule& s, RngStream& rng)
{
    require_frames(x0, tau, "perturb");
    const std::size_t n = x0.n_frames(), d = x0.frame_dim();
    VideoTensor eps(gaussian(rng, {n, d}), x0.geometry());
    VideoTensor xt = x0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = marginal_coeffs(s, tau[i]);
        auto out = xt.frame(i);
        const auto e = eps.frame(i);
        for (std::size_t j = 0; j < d; ++j) out[j] = c.mean_coef * out[j] + c.std * e[j];
    }
    return {std::move(xt), std::move(eps)};
}

VideoTensor simulate_forward_sde(const VideoTensor& x0, const Vtv& tau_end, const NoiseSchedule& s,
                                 double step_size, RngStream& rng)
{
    require_frames(x0, tau_end, "simulate_forward_sde");
    if (!(step_size > 0.0) || step_size > 1e-3) {
        throw DiffusionError("simulate_forward_sde: step size must lie in (0, 1e-3]");
    }
    tau_end.validate(s);
    VideoTensor x = x0;
    const std::size_t d = x.frame_dim();
    for (std::size_t i = 0; i < x.n_frames(); ++i) {
        if (tau_end[i] == 0.0) continue;
        const auto n_steps = static_cast<std::size_t>(std::ceil(tau_end[i] / step_size - 1e-9));
        const double h = tau_end[i] / static_cast<double>(n_steps);
        auto frame = x.frame(i);
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double beta = s.beta(static_cast<double>(k) * h);
            const double drift = -0.5 * beta * h;
            const double diffusion = std::sqrt(beta * h);
            for (std::size_t j = 0; j < d; ++j) {
                frame[j] += drift * frame[j] + diffusion * rng.normal();
            }
        }
    }
    return x;
}

VideoTensor ddim_step(const VideoTensor& x, const Vtv& tau, const Vtv& tau_next, const VideoTensor& eps_hat,
                      const NoiseSchedule& s)
{
    require_step(x, tau, tau_next, eps_hat, s, "ddim_step");
    VideoTensor out = x;
    const std::size_t d = x.frame_dim();
    for (std::size_t i = 0; i < x.n_frames(); ++i) {
        if (tau[i] == tau_next[i]) continue;
        const auto now = marginal_coeffs(s, tau[i]);
        const auto next = marginal_coeffs(s, tau_next[i]);
        auto o = out.frame(i);
        const auto e = eps_hat.frame(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double x0_hat = (o[j] - now.std * e[j]) / now.mean_coef;
            o[j] = next.mean_coef * x0_hat + next.std * e[j];
        }
    }
    return out;
}

VideoTensor ancestral_step(const VideoTensor& x, const Vtv& tau, const Vtv& tau_next, const VideoTensor& eps_hat,
                           const NoiseSchedule& s, RngStream& rng)
{
    require_step(x, tau, tau_next, eps_hat, s, "ancestral_step");
    VideoTensor out = x;
    const std::size_t d = x.frame_dim();
    for (std::size_t i = 0; i < x.n_frames(); ++i) {
        if (tau[i] == 0.0) continue;
        // beta_k = 1 - abar(tau)/abar(tau'), computed from the accumulated-rate gap.
        const double gap = s.accumulated_beta(tau[i]) - s.accumulated_beta(tau_next[i]);
        const double beta_k = -std::expm1(-gap);
        const double keep = std::exp(-0.5 * gap);  // sqrt(1 - beta_k)
        const double var_now = -std::expm1(-s.accumulated_beta(tau[i]));
        const double var_next = -std::expm1(-s.accumulated_beta(tau_next[i]));
        const double eps_coef = beta_k / std::sqrt(var_now);
        const double noise_std = std::sqrt(beta_k * var_next / var_now);
        auto o = out.frame(i);
        const auto e = eps_hat.frame(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double z = rng.normal();
            if (tau[i] == tau_next[i]) continue;
            o[j] = (o[j] - eps_coef * e[j]) / keep + noise_std * z;
        }
    }
    return out;
}

namespace {

TaskSpec effective_task(const TaskSpec& task, const SamplerConfig& cfg, const NoiseSchedule& s)
{
    if (!cfg.ignore_frozen || task.frozen.empty()) return task;
    TaskSpec t = task;
    const auto grid = time_grid(s, task.steps);
    for (auto f : t.frozen) std::copy(grid.begin(), grid.end(), t.trajectories.row(f).begin());
    t.frozen.clear();
    t.conditioning = Tensor();
    return t;
}

void clamp_frozen(VideoTensor& x, const TaskSpec& task)
{
    for (auto f : task.frozen) {
        const auto src = task.content(f);
        std::copy(src.begin(), src.end(), x.frame(f).begin());
    }
}

}  // namespace

std::vector<VideoTensor> sample_batch(const ScoreFunction& score, const TaskSpec& task_in, const SamplerConfig& cfg,
                                      const NoiseSchedule& s, std::span<RngStream> rngs)
{
    task_in.validate(s);
    if (cfg.steps != task_in.steps) {
        throw DiffusionError("sampler steps (" + std::to_string(cfg.steps) + ") differ from task trajectory steps (" +
                             std::to_string(task_in.steps) + ")");
    }
    const TaskSpec task = effective_task(task_in, cfg, s);
    const std::size_t n = task.n_frames;
    const std::size_t d = score.frame_dim();
    if (!task.frozen.empty() && task.conditioning.cols() != d) {
        throw DiffusionError("conditioning frame dim " + std::to_string(task.conditioning.cols()) +
                             " does not match model frame dim " + std::to_string(d));
    }

    std::vector<VideoTensor> xs;
    xs.reserve(rngs.size());
    for (auto& rng : rngs) {
        VideoTensor x(n, d);
        x.set_geometry(score.geometry());
        for (std::size_t i = 0; i < n; ++i) {
            if (task.is_frozen(i)) continue;
            for (double& v : x.frame(i)) v = rng.normal();
        }
        clamp_frozen(x, task);
        xs.push_back(std::move(x));
    }

    for (std::size_t k = 0; k < task.steps; ++k) {
        const Vtv tau = task.times_at(k);
        const Vtv tau_next = task.times_at(k + 1);
        auto eps = score.evaluate_batch(xs, tau);
        for (std::size_t j = 0; j < xs.size(); ++j) {
            if (!eps[j].tensor().all_finite()) {
                throw SamplingError(k, "score returned non-finite values for clip " + std::to_string(j));
            }
            xs[j] = cfg.kind == SamplerKind::deterministic ? ddim_step(xs[j], tau, tau_next, eps[j], s)
                                                           : ancestral_step(xs[j], tau, tau_next, eps[j], s, rngs[j]);
            clamp_frozen(xs[j], task);
        }
    }
    return xs;
}

VideoTensor sample(const ScoreFunction& score, const TaskSpec& task, const SamplerConfig& cfg,
                   const NoiseSchedule& s, RngStream& rng)
{
    return std::move(sample_batch(score, task, cfg, s, std::span<RngStream>(&rng, 1)).front());
}

VideoTensor sample_long(const ScoreFunction& score, std::size_t total_frames, std::size_t overlap,
                        std::size_t clip_frames, const SamplerConfig& cfg, const NoiseSchedule& s, RngStream& rng)
{
    if (overlap < 1 || overlap >= clip_frames) throw TaskError("long sampling requires 1 <= M < N");
    if (total_frames < clip_frames) throw TaskError("long sampling needs total_frames >= clip frames");
    VideoTensor video = sample(score, standard_task(clip_frames, cfg.steps, s), cfg, s, rng);
    const std::size_t d = video.frame_dim();
    std::vector<double> frames(video.tensor().data().begin(), video.tensor().data().end());
    std::size_t have = clip_frames;
    while (have < total_frames) {
        VideoTensor current(Tensor({have, d}, frames), video.geometry());
        const auto clip = sample(score, extend_task(current, overlap, clip_frames, cfg.steps, s), cfg, s, rng);
        const std::size_t take = std::min(clip_frames - overlap, total_frames - have);
        const auto src = clip.tensor().data().subspan(overlap * d, take * d);
        frames.insert(frames.end(), src.begin(), src.end());
        have += take;
    }
    return VideoTensor(Tensor({have, d}, std::move(frames)), video.geometry());
}

}  // namespace fvdm
