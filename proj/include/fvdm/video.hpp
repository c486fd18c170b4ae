#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "fvdm/tensor.hpp"

namespace fvdm {

struct ImageGeometry {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;

    std::size_t pixels() const { return height * width * channels; }
    friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

/// N frames, each a flat d-vector, stored as an N x d tensor.
class VideoTensor {
public:
    VideoTensor() = default;
    VideoTensor(std::size_t n_frames, std::size_t frame_dim);
    explicit VideoTensor(Tensor data, std::optional<ImageGeometry> geometry = std::nullopt);

    std::size_t n_frames() const { return data_.rows(); }
    std::size_t frame_dim() const { return data_.cols(); }

    std::span<double> frame(std::size_t i) { return data_.row(i); }
    std::span<const double> frame(std::size_t i) const { return data_.row(i); }

    const Tensor& tensor() const { return data_; }
    Tensor& tensor() { return data_; }

    const std::optional<ImageGeometry>& geometry() const { return geometry_; }
    void set_geometry(std::optional<ImageGeometry> g);

    /// Frames [begin, end) as a new clip with the same geometry.
    VideoTensor frames(std::size_t begin, std::size_t end) const;

    /// Copy with every entry clamped to [lo, hi]; only used when exporting.
    VideoTensor clamped(double lo, double hi) const;

    friend bool operator==(const VideoTensor&, const VideoTensor&) = default;

private:
    Tensor data_;
    std::optional<ImageGeometry> geometry_;
};

}  // namespace fvdm
