#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fvdm/autodiff.hpp"
#include "fvdm/rng.hpp"
#include "fvdm/schedule.hpp"
#include "fvdm/score.hpp"

namespace fvdm {

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DenoiserConfig {
    std::size_t frame_dim = 0;
    std::size_t embed_dim = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t mlp_ratio = 4;
    std::string preset = "toy-S";
    // Patch tokens for single-channel images. 0 keeps one token per frame.
    // With patches, blocks alternate spatial (within a frame) and temporal
    // (same patch across frames) attention.
    std::size_t patch_size = 0;
    std::size_t image_height = 0;
    std::size_t image_width = 0;
    // eps_hat_i = std(tau_i) x_i + mean_coef(tau_i) F_i: the network output F
    // predicts v = mean_coef eps - std x0, so the implied clean estimate
    // mean_coef x - std F does not amplify network error as mean_coef -> 0.
    // Off: eps_hat = F.
    bool v_prediction = true;
    NoiseSchedule schedule;

    /// "toy-S" (D=32, L=2, H=2) or "toy-B" (D=64, L=4, H=4).
    static DenoiserConfig from_preset(const std::string& name, std::size_t frame_dim);
    /// Same, tokenizing frames of `geometry` into patch x patch tiles.
    static DenoiserConfig from_preset(const std::string& name, const ImageGeometry& geometry, std::size_t patch);
    void validate() const;

    std::size_t tokens_per_frame() const;
    std::size_t token_dim() const;
};

/// Named parameter tensors in a fixed order shared by init and forward.
using ParamSet = std::vector<std::pair<std::string, Tensor>>;

/// Sinusoidal embedding of per-frame times: row i holds
/// sin/cos(1000 * tau_i * 10000^(-2k/D)) interleaved.
Tensor embed_timesteps(const Vtv& tau, std::size_t dim);

/// Fan-in uniform weights, zero biases, and zero adaLN modulation and output
/// layers so that every block starts as the identity.
ParamSet init_denoiser(const DenoiserConfig& cfg, RngStream& rng);

std::size_t parameter_count(const ParamSet& params);

struct ForwardOptions {
    /// Skip every transformer block (the gate-stripped reference model).
    bool skip_blocks = false;
    /// When set, receives each residual contribution (attention then MLP, per block).
    std::vector<Tensor>* residuals = nullptr;
};

/// Differentiable forward pass of one clip. `params` are tape nodes in
/// init_denoiser order; x is an N x d node.
ad::Var denoiser_forward(const DenoiserConfig& cfg, std::span<const ad::Var> params, ad::Var x, const Vtv& tau,
                         const ForwardOptions& opts = {});

/// Convenience evaluation on a private tape.
Tensor denoiser_forward(const DenoiserConfig& cfg, const ParamSet& params, const Tensor& x, const Vtv& tau,
                        const ForwardOptions& opts = {});

/// Registers `params` as trainable nodes on an empty tape, in order.
std::vector<ad::Var> register_parameters(ad::Tape& tape, const ParamSet& params);

class DenoiserScore final : public ScoreFunction {
public:
    DenoiserScore(DenoiserConfig cfg, ParamSet params, std::optional<ImageGeometry> geometry = std::nullopt);

    VideoTensor evaluate(const VideoTensor& x, const Vtv& tau) const override;
    std::size_t frame_dim() const override { return cfg_.frame_dim; }
    std::optional<ImageGeometry> geometry() const override { return geometry_; }

    const DenoiserConfig& config() const { return cfg_; }
    const ParamSet& params() const { return params_; }

private:
    DenoiserConfig cfg_;
    ParamSet params_;
    std::optional<ImageGeometry> geometry_;
};

}  // namespace fvdm
