#include "fvdm/video.hpp"

#include <algorithm>
#include <string>

namespace fvdm {

VideoTensor::VideoTensor(std::size_t n_frames, std::size_t frame_dim) : data_({n_frames, frame_dim}) {}

VideoTensor::VideoTensor(Tensor data, std::optional<ImageGeometry> geometry) : data_(std::move(data))
{
    if (data_.rank() != 2) {
        throw NumericsError("video tensor must be N x d, got " + shape_string(data_.shape()));
    }
    set_geometry(geometry);
}

void VideoTensor::set_geometry(std::optional<ImageGeometry> g)
{
    if (g && g->pixels() != data_.cols()) {
        throw NumericsError("image geometry " + std::to_string(g->height) + "x" + std::to_string(g->width) + "x" +
                            std::to_string(g->channels) + " does not match frame dim " +
                            std::to_string(data_.cols()));
    }
    geometry_ = g;
}

VideoTensor VideoTensor::frames(std::size_t begin, std::size_t end) const
{
    if (begin >= end || end > n_frames()) {
        throw NumericsError("frame range out of bounds");
    }
    const std::size_t d = frame_dim();
    Tensor out({end - begin, d});
    std::copy(data_.data().begin() + begin * d, data_.data().begin() + end * d, out.data().begin());
    return VideoTensor(std::move(out), geometry_);
}

VideoTensor VideoTensor::clamped(double lo, double hi) const
{
    VideoTensor out = *this;
    for (double& v : out.data_.data()) v = std::clamp(v, lo, hi);
    return out;
}

}  // namespace fvdm
