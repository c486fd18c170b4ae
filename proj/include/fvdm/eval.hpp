#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvdm/gaussian.hpp"
#include "fvdm/tasks.hpp"
#include "fvdm/video.hpp"

namespace fvdm {

class EvalError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct MomentReport {
    double mean_abs_error = 0.0;  // max over coordinates of |sample mean - law mean|
    double cov_rel_frobenius = 0.0;
    std::size_t samples = 0;
};

/// Empirical mean and unbiased covariance of the flattened clips against the law.
MomentReport moment_check(std::span<const VideoTensor> samples, const GaussianVideoModel& law);

/// Same, restricted to flat coordinates `coords` and compared with `law`
/// (e.g. a conditional law of the non-frozen frames).
MomentReport moment_check(std::span<const VideoTensor> samples, std::span<const std::size_t> coords,
                          const GaussianLaw& law);

struct FrechetReport {
    double distance = 0.0;  // d^2, clamped at 0
    double raw = 0.0;       // before clamping
    std::size_t feature_dim = 0;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
};

/// Flattened clip when N*d <= 256, otherwise per-frame mean and std plus
/// adjacent-frame difference norms (3N - 1 entries).
std::vector<double> clip_features(const VideoTensor& clip);

FrechetReport frechet_toy(std::span<const VideoTensor> set_a, std::span<const VideoTensor> set_b);

/// Fréchet distance between N(mu1, c1) and N(mu2, c2).
double frechet_distance(const Tensor& mu1, const Tensor& c1, const Tensor& mu2, const Tensor& c2);

/// Mean squared difference to the conditioning content, one value per frozen frame.
std::vector<double> conditioning_mse(const VideoTensor& generated, const TaskSpec& task);

std::string to_key_values(const MomentReport& r);
std::string to_key_values(const FrechetReport& r);

}  // namespace fvdm
