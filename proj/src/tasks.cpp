#include "fvdm/tasks.hpp"

#include <algorithm>
#include <json.hpp>

namespace fvdm {

namespace {

using json = nlohmann::json;

constexpr std::pair<TaskKind, const char*> kKindNames[] = {
    {TaskKind::standard, "standard"},
    {TaskKind::image2video, "image2video"},
    {TaskKind::interpolate, "interpolate"},
    {TaskKind::extend, "extend"},
    {TaskKind::condition_on_frame, "condition_on_frame"},
    {TaskKind::next_frame, "next_frame"},
    {TaskKind::progressive, "progressive"},
};

void require_steps(std::size_t n_frames, std::size_t steps)
{
    if (n_frames < 1) throw TaskError("task needs at least one frame");
    if (steps < 1) throw TaskError("task needs at least one sampling step");
}

TaskSpec base_task(TaskKind kind, std::size_t n_frames, std::size_t steps, const NoiseSchedule& s)
{
    require_steps(n_frames, steps);
    TaskSpec t;
    t.kind = kind;
    t.n_frames = n_frames;
    t.steps = steps;
    t.trajectories = Tensor({n_frames, steps + 1});
    const auto grid = time_grid(s, steps);
    for (std::size_t i = 0; i < n_frames; ++i) {
        std::copy(grid.begin(), grid.end(), t.trajectories.row(i).begin());
    }
    return t;
}

// Freezes the given frames (ascending) to the given content rows.
void freeze(TaskSpec& t, std::vector<std::size_t> frames, std::vector<std::span<const double>> content)
{
    const std::size_t d = content.front().size();
    t.conditioning = Tensor({frames.size(), d});
    for (std::size_t r = 0; r < frames.size(); ++r) {
        if (content[r].size() != d) throw TaskError("conditioning frames differ in dimension");
        std::copy(content[r].begin(), content[r].end(), t.conditioning.row(r).begin());
        auto traj = t.trajectories.row(frames[r]);
        std::fill(traj.begin(), traj.end(), 0.0);
    }
    t.frozen = std::move(frames);
}

}  // namespace

const char* task_kind_name(TaskKind kind)
{
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

TaskKind parse_task_kind(const std::string& name)
{
    for (const auto& [k, n] : kKindNames) {
        if (name == n) return k;
    }
    throw TaskError("unknown task kind '" + name + "'");
}

bool TaskSpec::is_frozen(std::size_t frame) const
{
    return std::binary_search(frozen.begin(), frozen.end(), frame);
}

std::span<const double> TaskSpec::content(std::size_t frame) const
{
    const auto it = std::lower_bound(frozen.begin(), frozen.end(), frame);
    if (it == frozen.end() || *it != frame) {
        throw TaskError("frame " + std::to_string(frame) + " is not frozen");
    }
    return conditioning.row(static_cast<std::size_t>(it - frozen.begin()));
}

Vtv TaskSpec::times_at(std::size_t k) const
{
    std::vector<double> times(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) times[i] = trajectories.at(i, k);
    return Vtv(std::move(times));
}

void TaskSpec::validate(const NoiseSchedule& s) const
{
    require_steps(n_frames, steps);
    if (trajectories.rank() != 2 || trajectories.rows() != n_frames || trajectories.cols() != steps + 1) {
        throw TaskError("trajectory matrix must be n_frames x (steps + 1)");
    }
    if (!std::is_sorted(frozen.begin(), frozen.end()) ||
        std::adjacent_find(frozen.begin(), frozen.end()) != frozen.end()) {
        throw TaskError("frozen frame list must be strictly ascending");
    }
    if (!frozen.empty() && frozen.back() >= n_frames) {
        throw TaskError("frozen frame index out of range");
    }
    if (frozen.empty() != conditioning.empty() || (!frozen.empty() && conditioning.rows() != frozen.size())) {
        throw TaskError("conditioning content must be given exactly for the frozen frames");
    }
    for (std::size_t i = 0; i < n_frames; ++i) {
        const auto traj = trajectories.row(i);
        if (is_frozen(i)) {
            if (std::any_of(traj.begin(), traj.end(), [](double t) { return t != 0.0; })) {
                throw TaskError("frozen frame " + std::to_string(i) + " has a non-zero trajectory");
            }
            continue;
        }
        if (traj.back() != 0.0) {
            throw TaskError("trajectory of frame " + std::to_string(i) + " does not end at 0");
        }
        if (!(traj.front() > 0.0 && traj.front() <= s.horizon)) {
            throw TaskError("trajectory of frame " + std::to_string(i) + " must start in (0, T]");
        }
        if (kind != TaskKind::progressive && traj.front() != s.horizon) {
            throw TaskError("trajectory of frame " + std::to_string(i) + " does not start at T");
        }
        for (std::size_t k = 1; k < traj.size(); ++k) {
            if (traj[k] > traj[k - 1]) {
                throw TaskError("trajectory of frame " + std::to_string(i) + " increases at step " +
                                std::to_string(k));
            }
        }
    }
}

TaskSpec standard_task(std::size_t n_frames, std::size_t steps, const NoiseSchedule& s)
{
    return base_task(TaskKind::standard, n_frames, steps, s);
}

TaskSpec image2video_task(std::span<const double> image, std::size_t n_frames, std::size_t steps,
                          const NoiseSchedule& s)
{
    if (image.empty()) throw TaskError("image2video needs a non-empty image");
    auto t = base_task(TaskKind::image2video, n_frames, steps, s);
    freeze(t, {0}, {image});
    return t;
}

TaskSpec interpolate_task(std::span<const double> first, std::span<const double> last, std::size_t n_frames,
                          std::size_t steps, const NoiseSchedule& s)
{
    if (n_frames < 3) throw TaskError("interpolation needs at least 3 frames");
    if (first.empty() || first.size() != last.size()) throw TaskError("endpoint frames differ in dimension");
    auto t = base_task(TaskKind::interpolate, n_frames, steps, s);
    freeze(t, {0, n_frames - 1}, {first, last});
    return t;
}

TaskSpec extend_task(const VideoTensor& prev, std::size_t overlap, std::size_t n_frames, std::size_t steps,
                     const NoiseSchedule& s)
{
    if (overlap < 1 || overlap >= n_frames) throw TaskError("extend requires 1 <= M < N");
    if (prev.n_frames() < overlap) throw TaskError("previous clip has fewer than M frames");
    auto t = base_task(TaskKind::extend, n_frames, steps, s);
    std::vector<std::size_t> frames;
    std::vector<std::span<const double>> content;
    for (std::size_t i = 0; i < overlap; ++i) {
        frames.push_back(i);
        content.push_back(prev.frame(prev.n_frames() - overlap + i));
    }
    freeze(t, std::move(frames), std::move(content));
    return t;
}

TaskSpec condition_on_frame_task(std::span<const double> frame, std::size_t position, std::size_t n_frames,
                                 std::size_t steps, const NoiseSchedule& s)
{
    if (position < 1 || position > n_frames) throw TaskError("conditioning position must lie in [1, N]");
    if (frame.empty()) throw TaskError("conditioning frame is empty");
    auto t = base_task(TaskKind::condition_on_frame, n_frames, steps, s);
    freeze(t, {position - 1}, {frame});
    return t;
}

TaskSpec next_frame_task(const VideoTensor& prev, std::size_t n_frames, std::size_t steps, const NoiseSchedule& s)
{
    if (n_frames < 2) throw TaskError("next-frame prediction needs at least 2 frames");
    if (prev.n_frames() < n_frames - 1) throw TaskError("previous clip has fewer than N-1 frames");
    auto t = base_task(TaskKind::next_frame, n_frames, steps, s);
    std::vector<std::size_t> frames;
    std::vector<std::span<const double>> content;
    for (std::size_t i = 0; i + 1 < n_frames; ++i) {
        frames.push_back(i);
        content.push_back(prev.frame(prev.n_frames() - (n_frames - 1) + i));
    }
    freeze(t, std::move(frames), std::move(content));
    return t;
}

TaskSpec progressive_task(std::size_t n_frames, std::size_t steps, double slope, const NoiseSchedule& s)
{
    if (!(slope > 0.0)) throw TaskError("progressive slope must be positive");
    auto t = base_task(TaskKind::progressive, n_frames, steps, s);
    for (std::size_t i = 0; i < n_frames; ++i) {
        const double rate = slope * static_cast<double>(i + 1);
        for (double& time : t.trajectories.row(i)) time = std::min(rate * time, time);
    }
    return t;
}

std::string task_to_json(const TaskSpec& task)
{
    json j;
    j["kind"] = task_kind_name(task.kind);
    j["n_frames"] = task.n_frames;
    j["steps"] = task.steps;
    j["frozen"] = task.frozen;
    json cond = json::array();
    for (std::size_t r = 0; !task.conditioning.empty() && r < task.conditioning.rows(); ++r) {
        const auto row = task.conditioning.row(r);
        cond.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["conditioning"] = cond;
    json traj = json::array();
    for (std::size_t i = 0; i < task.n_frames; ++i) {
        const auto row = task.trajectories.row(i);
        traj.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["trajectories"] = traj;
    return j.dump(2);
}

TaskSpec task_from_json(const std::string& text)
{
    try {
        const auto j = json::parse(text);
        TaskSpec t;
        t.kind = parse_task_kind(j.at("kind").get<std::string>());
        t.n_frames = j.at("n_frames").get<std::size_t>();
        t.steps = j.at("steps").get<std::size_t>();
        t.frozen = j.at("frozen").get<std::vector<std::size_t>>();
        const auto cond = j.at("conditioning").get<std::vector<std::vector<double>>>();
        if (!cond.empty()) {
            std::vector<double> flat;
            for (const auto& row : cond) {
                if (row.size() != cond.front().size()) throw TaskError("ragged conditioning rows");
                flat.insert(flat.end(), row.begin(), row.end());
            }
            t.conditioning = Tensor({cond.size(), cond.front().size()}, std::move(flat));
        }
        const auto traj = j.at("trajectories").get<std::vector<std::vector<double>>>();
        std::vector<double> flat;
        for (const auto& row : traj) {
            if (row.size() != t.steps + 1) throw TaskError("trajectory row length must be steps + 1");
            flat.insert(flat.end(), row.begin(), row.end());
        }
        t.trajectories = Tensor({traj.size(), t.steps + 1}, std::move(flat));
        return t;
    } catch (const json::exception& e) {
        throw TaskError(std::string("malformed task document: ") + e.what());
    } catch (const NumericsError& e) {
        throw TaskError(std::string("malformed task document: ") + e.what());
    }
}

}  // namespace fvdm
