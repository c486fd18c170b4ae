#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fvdm/schedule.hpp"
#include "fvdm/video.hpp"

namespace fvdm {

/// Common evaluation contract for learned and analytic noise predictors.
/// evaluate() returns eps_hat with the shape of x; the score of frame i is
/// -eps_hat_i / std(tau_i).
class ScoreFunction {
public:
    virtual ~ScoreFunction() = default;

    virtual VideoTensor evaluate(const VideoTensor& x, const Vtv& tau) const = 0;

    /// Same tau for every clip. Implementations may share per-tau work.
    virtual std::vector<VideoTensor> evaluate_batch(std::span<const VideoTensor> xs, const Vtv& tau) const;

    virtual std::size_t frame_dim() const = 0;
    virtual std::optional<ImageGeometry> geometry() const { return std::nullopt; }
};

}  // namespace fvdm
