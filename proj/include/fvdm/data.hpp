#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvdm/gaussian.hpp"
#include "fvdm/video.hpp"

namespace fvdm {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DatasetKind { bouncing_ball, moving_bar, gaussian_ar1 };

const char* dataset_kind_name(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::bouncing_ball;
    std::size_t n_frames = 8;
    std::size_t height = 16;    // image kinds
    std::size_t width = 16;     // image kinds
    std::size_t frame_dim = 1;  // gaussian_ar1
    double ball_radius = 3.0;   // pixels
    double ball_speed = 1.5;    // pixels per frame, direction drawn per clip
    double bar_width = 3.0;     // pixels
    double bar_velocity = 2.0;  // pixels per frame, wraps around
    double rho = 0.9;
    double variance = 1.0;
    std::size_t count = 1024;
    std::uint64_t seed = 0;

    bool is_image() const { return kind != DatasetKind::gaussian_ar1; }
    std::size_t dim() const { return is_image() ? height * width : frame_dim; }
    std::optional<ImageGeometry> geometry() const;
    void validate() const;
};

/// Pure function of (spec.seed, index).
VideoTensor generate(const DatasetSpec& spec, std::size_t index);

/// Exact law of gaussian_ar1 clips: m = 0, C[(i,a),(j,b)] = v rho^|i-j| [a == b].
GaussianVideoModel ar1_law(const DatasetSpec& spec);

std::string dataset_spec_to_json(const DatasetSpec& spec);
/// Missing keys take defaults; malformed or unknown keys raise DataError naming the key.
DatasetSpec dataset_spec_from_json(const std::string& text);

enum class ClipFormat { pgm_strip, f64_raw };

/// pgm_strip: one P5 image, frames tiled left to right, [-1, 1] -> [0, 255]
/// after clamping. f64_raw: N and d as u64 LE, then row-major f64 LE.
void export_clip(const VideoTensor& x, const std::filesystem::path& path, ClipFormat format);

VideoTensor read_f64_raw(const std::filesystem::path& path);

/// A P5 image as one frame per `frames` equal-width tiles, [0, 255] -> [-1, 1].
VideoTensor read_pgm_strip(const std::filesystem::path& path, std::size_t frames = 1);

/// Writes clip_000000.f64 ... plus manifest.json into `dir`.
void write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

/// Every *.f64 clip in `dir`, in file-name order; all must share (N, d).
std::vector<VideoTensor> read_clip_dir(const std::filesystem::path& dir);

}  // namespace fvdm
