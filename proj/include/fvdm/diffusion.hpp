#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fvdm/rng.hpp"
#include "fvdm/schedule.hpp"
#include "fvdm/score.hpp"
#include "fvdm/tasks.hpp"
#include "fvdm/video.hpp"

namespace fvdm {

class DiffusionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when the score returns non-finite values; carries the step index.
class SamplingError : public DiffusionError {
public:
    SamplingError(std::size_t step, const std::string& what)
        : DiffusionError("sampling step " + std::to_string(step) + ": " + what), step_(step)
    {
    }
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

struct Perturbed {
    VideoTensor xt;
    VideoTensor eps;
};

/// Frame i: xt_i = mean_coef(tau_i) x0_i + std(tau_i) eps_i.
Perturbed perturb(const VideoTensor& x0, const Vtv& tau, const NoiseSchedule& s, RngStream& rng);

/// Euler-Maruyama integration of the per-frame VP SDE; frame i runs its own
/// clock from 0 to tau_end[i] with steps no larger than step_size (<= 1e-3).
VideoTensor simulate_forward_sde(const VideoTensor& x0, const Vtv& tau_end, const NoiseSchedule& s,
                                 double step_size, RngStream& rng);

/// Deterministic (eta = 0) update per frame. Frames with tau == tau_next
/// are returned unchanged.
VideoTensor ddim_step(const VideoTensor& x, const Vtv& tau, const Vtv& tau_next, const VideoTensor& eps_hat,
                      const NoiseSchedule& s);

/// Ancestral posterior step per frame. Noise is drawn, in frame order, only
/// for frames with tau > 0; frames with tau == tau_next are unchanged.
VideoTensor ancestral_step(const VideoTensor& x, const Vtv& tau, const Vtv& tau_next, const VideoTensor& eps_hat,
                           const NoiseSchedule& s, RngStream& rng);

enum class SamplerKind { ancestral, deterministic };

struct SamplerConfig {
    SamplerKind kind = SamplerKind::deterministic;
    std::size_t steps = 50;
    std::uint64_t stream_id = 0;
    /// Test hook: sample as if no frame were frozen (standard trajectories,
    /// conditioning ignored). Used only as a negative control.
    bool ignore_frozen = false;
};

const char* sampler_kind_name(SamplerKind kind);

/// Runs the task's per-frame trajectories from their start times down to 0.
VideoTensor sample(const ScoreFunction& score, const TaskSpec& task, const SamplerConfig& cfg,
                   const NoiseSchedule& s, RngStream& rng);

/// One clip per stream, stepped in lockstep so the score can batch per-tau
/// work. Element j is bit-identical to sample() with rngs[j].
std::vector<VideoTensor> sample_batch(const ScoreFunction& score, const TaskSpec& task, const SamplerConfig& cfg,
                                      const NoiseSchedule& s, std::span<RngStream> rngs);

/// Chains extend tasks: the first clip is a standard sample, each further
/// clip freezes the previous `overlap` frames and contributes N - overlap
/// new ones, until `total_frames` frames exist (the last clip is truncated).
VideoTensor sample_long(const ScoreFunction& score, std::size_t total_frames, std::size_t overlap,
                        std::size_t clip_frames, const SamplerConfig& cfg, const NoiseSchedule& s, RngStream& rng);

}  // namespace fvdm
