#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvdm/denoiser.hpp"
#include "fvdm/schedule.hpp"
#include "fvdm/video.hpp"

namespace fvdm {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Loss stayed above 10x its initial value for 100 consecutive steps.
class DivergenceError : public TrainingError {
public:
    using TrainingError::TrainingError;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Weighting { uniform_eps, sigma2_score };

const char* weighting_name(Weighting w);
Weighting parse_weighting(const std::string& name);

struct TrainConfig {
    PtssConfig ptss;
    std::size_t batch_size = 4;
    std::size_t total_steps = 2000;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // global gradient norm; 0 disables
    Weighting weighting = Weighting::uniform_eps;
    std::size_t checkpoint_interval = 0;  // 0: none during training
    std::uint64_t seed = 0;

    void validate() const;
};

/// Noise predictor seen by the loss: eps_hat for xt (a tape node) at tau.
using EpsModel = std::function<ad::Var(ad::Tape&, ad::Var xt, const Vtv& tau)>;

struct LossDraw {
    Vtv tau;
    bool per_frame = false;
};

/// Draws tau by PTSS, perturbs x0 and returns the weighted denoising error
/// as a scalar node: mean over frames and entries of (eps_hat - eps)^2, or
/// in score space std^2 (s_hat - s)^2 with s = -eps/std.
ad::Var denoising_loss(ad::Tape& tape, const EpsModel& model, const VideoTensor& x0, const NoiseSchedule& s,
                       const PtssConfig& ptss, Weighting weighting, RngStream& rng, LossDraw* draw = nullptr);

EpsModel denoiser_eps_model(const DenoiserConfig& cfg, std::span<const ad::Var> params);

struct TrainState {
    DenoiserConfig model;
    NoiseSchedule schedule;
    std::size_t n_frames = 0;
    std::optional<ImageGeometry> geometry;

    ParamSet params;
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;
    std::uint64_t step = 0;
    double initial_loss = 0.0;        // loss at step 1, the divergence reference
    std::uint64_t over_count = 0;     // consecutive steps above 10x initial
    RngStream batch_rng;
    RngStream loss_rng;
};

/// Fresh parameters and optimizer state; streams derived from cfg.seed. The
/// model's output scaling uses `s`.
TrainState init_train_state(const TrainConfig& cfg, const DenoiserConfig& model, std::size_t n_frames,
                            std::optional<ImageGeometry> geometry, const NoiseSchedule& s);

struct TraceRow {
    std::uint64_t step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;    // before clipping
    std::size_t ptss_branch = 0;  // batch elements that drew per-frame times
    bool clipped = false;
};

std::string trace_csv_header();
std::string trace_csv_row(const TraceRow& row);

struct TrainHooks {
    std::function<void(const TraceRow&)> on_step;
    std::function<void(const TrainState&)> on_checkpoint;
};

struct AdamConfig {
    double lr = 3e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// One bias-corrected Adam update; `step` is the 1-based update count.
void adam_update(std::vector<Tensor>& params, const std::vector<Tensor>& grads, std::vector<Tensor>& m,
                 std::vector<Tensor>& v, std::uint64_t step, const AdamConfig& cfg);

/// Runs from state.step to cfg.total_steps. Deterministic for a fixed state and data.
std::vector<TraceRow> train(TrainState& state, const TrainConfig& cfg, std::span<const VideoTensor> data,
                            const TrainHooks& hooks = {});

/// Mean of the last `window` losses (or all, if fewer).
double tail_mean(std::span<const TraceRow> trace, std::size_t window);

// Checkpoint container: magic "FVDM1\n", u64 entry count, then per entry
// {u64 name length, name bytes, u64 rank, rank x u64 extents, f64 values},
// all little-endian.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
void write_tensors(const NamedTensors& entries, const std::filesystem::path& path);
NamedTensors read_tensors(const std::filesystem::path& path);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace fvdm
