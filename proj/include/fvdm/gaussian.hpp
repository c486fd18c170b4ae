#pragma once

#include <span>
#include <vector>

#include "fvdm/score.hpp"
#include "fvdm/tensor.hpp"

namespace fvdm {

/// Gaussian law over whole clips, flattened frame-major (index i*d + j).
struct GaussianVideoModel {
    std::size_t n_frames = 0;
    std::size_t frame_dim = 0;
    Tensor mean;  // [N*d]
    Tensor cov;   // [N*d, N*d]

    /// Symmetric within 1e-9, smallest eigenvalue above 1e-8.
    void validate() const;
    std::size_t dim() const { return n_frames * frame_dim; }
};

/// Conditional law of the coordinates `keep` given `given` = `values`.
struct GaussianLaw {
    Tensor mean;
    Tensor cov;
};
GaussianLaw condition_gaussian(const Tensor& mean, const Tensor& cov, std::span<const std::size_t> keep,
                               std::span<const std::size_t> given, std::span<const double> values);

/// Flat coordinate indices of the given frames.
std::vector<std::size_t> frame_coordinates(std::span<const std::size_t> frames, std::size_t frame_dim);

/// Exact eps prediction for the per-frame forward process applied to
/// N(m, C), conditioned on the frozen frames (tau_i == 0) at their clean
/// values in x. Frozen rows are zero.
VideoTensor oracle_eps(const GaussianVideoModel& model, const NoiseSchedule& s, const VideoTensor& x, const Vtv& tau);

/// Log-density of the unconditional diffused law N(A m, A C A + S^2) at x.
double diffused_log_density(const GaussianVideoModel& model, const NoiseSchedule& s, const VideoTensor& x,
                            const Vtv& tau);

/// ScoreFunction over oracle_eps; evaluate_batch factorizes once per tau.
class GaussianOracleScore final : public ScoreFunction {
public:
    GaussianOracleScore(GaussianVideoModel model, NoiseSchedule s);

    VideoTensor evaluate(const VideoTensor& x, const Vtv& tau) const override;
    std::vector<VideoTensor> evaluate_batch(std::span<const VideoTensor> xs, const Vtv& tau) const override;
    std::size_t frame_dim() const override { return model_.frame_dim; }

    const GaussianVideoModel& model() const { return model_; }

private:
    GaussianVideoModel model_;
    NoiseSchedule schedule_;
};

}  // namespace fvdm
