#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fvdm/schedule.hpp"
#include "fvdm/video.hpp"

namespace fvdm {

class TaskError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class TaskKind { standard, image2video, interpolate, extend, condition_on_frame, next_frame, progressive };

const char* task_kind_name(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

/// A zero-shot sampling configuration: which frames are frozen to given
/// content and the explicit time trajectory of every frame.
struct TaskSpec {
    TaskKind kind = TaskKind::standard;
    std::size_t n_frames = 0;
    std::size_t steps = 0;
    std::vector<std::size_t> frozen;  // ascending, 0-based frame indices
    Tensor conditioning;              // |frozen| x d, row r is the content of frozen[r]; empty when none
    Tensor trajectories;              // n_frames x (steps + 1), column 0 is the start time

    bool is_frozen(std::size_t frame) const;
    /// Row of `conditioning` for a frozen frame.
    std::span<const double> content(std::size_t frame) const;
    /// Times of every frame at trajectory index k.
    Vtv times_at(std::size_t k) const;

    /// Frozen rows identically 0; others non-increasing, ending at 0, starting
    /// in (0, T] (exactly T except for progressive schedules); content present
    /// iff frozen.
    void validate(const NoiseSchedule& s) const;
};

TaskSpec standard_task(std::size_t n_frames, std::size_t steps, const NoiseSchedule& s);
TaskSpec image2video_task(std::span<const double> image, std::size_t n_frames, std::size_t steps,
                          const NoiseSchedule& s);
TaskSpec interpolate_task(std::span<const double> first, std::span<const double> last, std::size_t n_frames,
                          std::size_t steps, const NoiseSchedule& s);
/// Freezes the first `overlap` frames to the tail of `prev`.
TaskSpec extend_task(const VideoTensor& prev, std::size_t overlap, std::size_t n_frames, std::size_t steps,
                     const NoiseSchedule& s);
/// `position` is 1-based.
TaskSpec condition_on_frame_task(std::span<const double> frame, std::size_t position, std::size_t n_frames,
                                 std::size_t steps, const NoiseSchedule& s);
/// Freezes frames 1..N-1 to the last N-1 frames of `prev`.
TaskSpec next_frame_task(const VideoTensor& prev, std::size_t n_frames, std::size_t steps, const NoiseSchedule& s);
/// tau_i(t) = min(slope * i * t, t) with 1-based i; nothing frozen.
TaskSpec progressive_task(std::size_t n_frames, std::size_t steps, double slope, const NoiseSchedule& s);

std::string task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const std::string& text);

}  // namespace fvdm
