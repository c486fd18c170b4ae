#include "fvdm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fvdm/config.hpp"
#include "fvdm/data.hpp"
#include "fvdm/denoiser.hpp"
#include "fvdm/tasks.hpp"
#include "fvdm/training.hpp"

namespace fvdm {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Bad input that is the caller's fault: exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr std::size_t kOracleBatch = 500;
constexpr std::size_t kSmoothWindow = 100;

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw UsageError("write failed for " + path.string());
}

std::string format_real(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string numbered(const std::string& stem, std::size_t i, const std::string& ext)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%06zu", i);
    return stem + buf + ext;
}

// ---------------------------------------------------------------- oracle

struct OracleSetup {
    TaskSpec task;
    std::vector<std::size_t> free_frames;
};

OracleSetup oracle_setup(const OracleOptions& opts, const GaussianVideoModel& law, const NoiseSchedule& s)
{
    DatasetSpec spec;
    spec.kind = DatasetKind::gaussian_ar1;
    spec.n_frames = law.n_frames;
    spec.frame_dim = law.frame_dim;
    spec.rho = 0.9;
    spec.variance = 1.0;
    spec.count = 1;
    spec.seed = opts.seed;
    const VideoTensor content = generate(spec, 0);
    const std::size_t n = law.n_frames;

    OracleSetup out;
    switch (opts.which) {
    case OracleCase::unconditional:
        out.task = standard_task(n, opts.steps, s);
        break;
    case OracleCase::image2video:
        out.task = image2video_task(content.frame(0), n, opts.steps, s);
        break;
    case OracleCase::interpolate:
        out.task = interpolate_task(content.frame(0), content.frame(n - 1), n, opts.steps, s);
        break;
    case OracleCase::extend:
        out.task = extend_task(content, 2, n, opts.steps, s);
        break;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.task.is_frozen(i)) out.free_frames.push_back(i);
    }
    return out;
}

GaussianLaw free_law(const GaussianVideoModel& law, const TaskSpec& task, std::span<const std::size_t> free_coords)
{
    std::vector<std::size_t> given;
    std::vector<double> values;
    for (std::size_t f : task.frozen) {
        const auto row = task.content(f);
        for (std::size_t a = 0; a < law.frame_dim; ++a) {
            given.push_back(f * law.frame_dim + a);
            values.push_back(row[a]);
        }
    }
    return condition_gaussian(law.mean, law.cov, free_coords, given, values);
}

// Samples needed for the Monte-Carlo standard error of the mean to be a
// quarter of the mean tolerance, and the root expected squared relative
// Frobenius error of the sample covariance, sqrt(((tr C)^2 + |C|_F^2) / n)
// / |C|_F, to be a quarter of the covariance tolerance.
std::size_t min_samples_for(const GaussianLaw& law, double mean_tol, double cov_tol)
{
    const std::size_t k = law.mean.size();
    double max_var = 0.0, trace = 0.0, frob2 = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        max_var = std::max(max_var, law.cov.at(i, i));
        trace += law.cov.at(i, i);
        for (std::size_t j = 0; j < k; ++j) frob2 += law.cov.at(i, j) * law.cov.at(i, j);
    }
    const double for_mean = 16.0 * max_var / (mean_tol * mean_tol);
    const double for_cov = 16.0 * (trace * trace + frob2) / (frob2 * cov_tol * cov_tol);
    return static_cast<std::size_t>(std::ceil(std::max(for_mean, for_cov)));
}

// ---------------------------------------------------------------- commands

struct TrainArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
    std::string resume;
};

std::vector<VideoTensor> training_clips(const DatasetSpec& spec)
{
    std::vector<VideoTensor> clips;
    clips.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) clips.push_back(generate(spec, i));
    return clips;
}

void check_resume_matches(const TrainState& st, const RunConfig& cfg)
{
    const DenoiserConfig want = cfg.denoiser();
    const DenoiserConfig& have = st.model;
    const bool same_model = have.frame_dim == want.frame_dim && have.embed_dim == want.embed_dim &&
                            have.n_layers == want.n_layers && have.n_heads == want.n_heads &&
                            have.mlp_ratio == want.mlp_ratio && have.patch_size == want.patch_size &&
                            have.v_prediction == want.v_prediction;
    if (!same_model) throw UsageError("resume: checkpoint model does not match model.* in the config");
    if (st.n_frames != cfg.dataset.n_frames) throw UsageError("resume: checkpoint n_frames differs from dataset.n_frames");
    const auto& a = st.schedule;
    const auto& b = cfg.schedule;
    if (a.beta_min != b.beta_min || a.beta_max != b.beta_max || a.horizon != b.horizon || a.t_min != b.t_min) {
        throw UsageError("resume: checkpoint schedule differs from schedule.* in the config");
    }
}

// Non-overlapping block means of the loss, one row per block end.
std::string smoothed_csv(std::span<const TraceRow> trace, std::size_t window)
{
    std::ostringstream os;
    os.precision(17);
    os << "step,smoothed_loss\n";
    for (std::size_t begin = 0; begin < trace.size(); begin += window) {
        const std::size_t end = std::min(trace.size(), begin + window);
        double sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) sum += trace[i].loss;
        os << trace[end - 1].step << "," << sum / static_cast<double>(end - begin) << "\n";
    }
    return os.str();
}

int cmd_train(const TrainArgs& a, std::ostream& out)
{
    RunConfig cfg = a.config.empty() ? parse_run_config("", a.overrides) : load_run_config(a.config, a.overrides);
    if (!a.out.empty()) cfg.out = a.out;
    if (a.steps) cfg.train.total_steps = *a.steps;
    if (a.seed) cfg.seed = cfg.train.seed = *a.seed;
    cfg.train.validate();

    const fs::path dir = cfg.out;
    ensure_dir(dir);
    write_text(dir / "resolved_config.json", resolved_config_json(cfg) + "\n");

    const auto clips = training_clips(cfg.dataset);
    TrainState state;
    if (!a.resume.empty()) {
        state = load_checkpoint(a.resume);
        check_resume_matches(state, cfg);
    } else {
        state = init_train_state(cfg.train, cfg.denoiser(), cfg.dataset.n_frames, cfg.dataset.geometry(),
                                 cfg.schedule);
    }

    std::ofstream loss(dir / "loss.csv", std::ios::binary);
    loss << trace_csv_header() << "\n";
    TrainHooks hooks;
    hooks.on_step = [&](const TraceRow& row) { loss << trace_csv_row(row) << "\n"; };
    if (cfg.train.checkpoint_interval > 0) {
        ensure_dir(dir / "checkpoints");
        hooks.on_checkpoint = [&](const TrainState& st) {
            save_checkpoint(st, dir / "checkpoints" / numbered("step", st.step, ".ckpt"));
        };
    }

    std::vector<TraceRow> trace;
    try {
        trace = train(state, cfg.train, clips, hooks);
    } catch (const DivergenceError&) {
        loss.flush();
        throw;
    }
    loss.flush();
    save_checkpoint(state, dir / "final.ckpt");
    write_text(dir / "loss_smoothed.csv", smoothed_csv(trace, kSmoothWindow));

    out << "steps=" << state.step << "\n";
    if (!trace.empty()) {
        const std::size_t w = std::min(kSmoothWindow, trace.size());
        double first = 0.0;
        for (std::size_t i = 0; i < w; ++i) first += trace[i].loss;
        out << "first_window_loss=" << format_real(first / static_cast<double>(w)) << "\n";
        out << "final_window_loss=" << format_real(tail_mean(trace, kSmoothWindow)) << "\n";
    }
    out << "checkpoint=" << (dir / "final.ckpt").string() << "\n";
    return exit_code::ok;
}

struct SampleArgs {
    std::string ckpt;
    std::string task = "standard";
    std::optional<std::size_t> frames;
    std::size_t steps = 50;
    std::string sampler = "ddim";
    std::uint64_t seed = 0;
    std::string image, first, last, prev;
    std::size_t position = 1;
    std::size_t overlap = 2;
    double slope = 2.0;
    std::size_t count = 1;
    std::optional<std::size_t> length;
    std::string out;
};

VideoTensor read_clip_file(const fs::path& path, std::size_t frame_dim, const std::optional<ImageGeometry>& geometry)
{
    if (!fs::is_regular_file(path)) throw UsageError("conditioning file " + path.string() + " not found");
    VideoTensor clip;
    if (path.extension() == ".pgm") {
        if (!geometry) throw UsageError(path.string() + ": PGM input needs an image model");
        const std::size_t pixels = read_pgm_strip(path, 1).frame_dim();
        if (pixels % geometry->pixels() != 0) throw UsageError(path.string() + ": image size does not match the model");
        clip = read_pgm_strip(path, pixels / geometry->pixels());
        if (clip.geometry() != geometry) throw UsageError(path.string() + ": image size does not match the model");
    } else {
        clip = read_f64_raw(path);
        if (clip.frame_dim() != frame_dim) {
            throw UsageError(path.string() + ": frame dimension " + std::to_string(clip.frame_dim()) +
                             " does not match the model's " + std::to_string(frame_dim));
        }
    }
    clip.set_geometry(geometry);
    return clip;
}

VideoTensor read_single_frame(const fs::path& path, std::size_t frame_dim, const std::optional<ImageGeometry>& g)
{
    VideoTensor clip = read_clip_file(path, frame_dim, g);
    if (clip.n_frames() != 1) {
        throw UsageError(path.string() + ": expected a single frame, found " + std::to_string(clip.n_frames()));
    }
    return clip;
}

int cmd_sample(const SampleArgs& a, std::ostream& out)
{
    TrainState st;
    try {
        st = load_checkpoint(a.ckpt);
    } catch (const CheckpointError& e) {
        throw UsageError(e.what());
    }
    const DenoiserScore score(st.model, st.params, st.geometry);
    const NoiseSchedule& s = st.schedule;
    const std::size_t d = st.model.frame_dim;
    const TaskKind kind = parse_task_alias(a.task);
    const std::size_t n = a.frames.value_or(st.n_frames);
    if (n < 1) throw UsageError("--frames must be positive");
    if (a.steps < 1) throw UsageError("--steps must be positive");
    if (a.count < 1) throw UsageError("--count must be positive");

    SamplerConfig sc;
    sc.kind = parse_sampler_kind(a.sampler);
    sc.steps = a.steps;

    const bool wants_image = kind == TaskKind::image2video || kind == TaskKind::condition_on_frame;
    const bool wants_ends = kind == TaskKind::interpolate;
    const bool wants_prev = kind == TaskKind::next_frame || (kind == TaskKind::extend && !a.length);
    auto refuse = [&](bool given, bool wanted, const char* flag) {
        if (given && !wanted) throw UsageError(std::string("task ") + task_kind_name(kind) + " does not take " + flag);
        if (!given && wanted) throw UsageError(std::string("task ") + task_kind_name(kind) + " requires " + flag);
    };
    refuse(!a.image.empty(), wants_image, "--image");
    refuse(!a.first.empty(), wants_ends, "--first");
    refuse(!a.last.empty(), wants_ends, "--last");
    refuse(!a.prev.empty(), wants_prev, "--prev");
    if (a.length && kind != TaskKind::extend) throw UsageError("--length only applies to the extend task");

    const fs::path dir = a.out;
    json manifest;
    manifest["checkpoint"] = a.ckpt;
    manifest["task"] = task_kind_name(kind);
    manifest["frames"] = n;
    manifest["steps"] = sc.steps;
    manifest["sampler"] = a.sampler == "ddpm" || a.sampler == "ancestral" ? "ddpm" : "ddim";
    manifest["seed"] = a.seed;
    manifest["count"] = a.count;
    const RngStream root{a.seed, 0, 0};

    if (a.length) {
        if (*a.length < n) throw UsageError("--length must be at least --frames");
        if (a.overlap < 1 || a.overlap >= n) throw UsageError("--overlap must lie in [1, frames)");
        ensure_dir(dir);
        manifest["length"] = *a.length;
        manifest["overlap"] = a.overlap;
        json files = json::array();
        for (std::size_t j = 0; j < a.count; ++j) {
            RngStream rng = root.substream(j);
            VideoTensor v = sample_long(score, *a.length, a.overlap, n, sc, s, rng);
            v.set_geometry(st.geometry);
            const std::string stem = numbered("sample", j, "");
            export_clip(v, dir / (stem + ".f64"), ClipFormat::f64_raw);
            files.push_back(stem + ".f64");
            if (st.geometry) {
                export_clip(v, dir / (stem + ".pgm"), ClipFormat::pgm_strip);
                files.push_back(stem + ".pgm");
            }
        }
        manifest["files"] = files;
        write_text(dir / "manifest.json", manifest.dump(2) + "\n");
        out << "wrote " << a.count << " clip(s) of " << *a.length << " frames to " << dir.string() << "\n";
        return exit_code::ok;
    }

    TaskSpec task;
    try {
        switch (kind) {
        case TaskKind::standard:
            task = standard_task(n, sc.steps, s);
            break;
        case TaskKind::image2video:
            task = image2video_task(read_single_frame(a.image, d, st.geometry).frame(0), n, sc.steps, s);
            manifest["image"] = a.image;
            break;
        case TaskKind::interpolate: {
            const VideoTensor f = read_single_frame(a.first, d, st.geometry);
            const VideoTensor l = read_single_frame(a.last, d, st.geometry);
            task = interpolate_task(f.frame(0), l.frame(0), n, sc.steps, s);
            manifest["first"] = a.first;
            manifest["last"] = a.last;
            break;
        }
        case TaskKind::extend:
            task = extend_task(read_clip_file(a.prev, d, st.geometry), a.overlap, n, sc.steps, s);
            manifest["prev"] = a.prev;
            manifest["overlap"] = a.overlap;
            break;
        case TaskKind::condition_on_frame:
            task = condition_on_frame_task(read_single_frame(a.image, d, st.geometry).frame(0), a.position, n,
                                           sc.steps, s);
            manifest["image"] = a.image;
            manifest["position"] = a.position;
            break;
        case TaskKind::next_frame:
            task = next_frame_task(read_clip_file(a.prev, d, st.geometry), n, sc.steps, s);
            manifest["prev"] = a.prev;
            break;
        case TaskKind::progressive:
            task = progressive_task(n, sc.steps, a.slope, s);
            manifest["slope"] = a.slope;
            break;
        }
    } catch (const TaskError& e) {
        throw UsageError(e.what());
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }

    ensure_dir(dir);
    std::vector<RngStream> rngs;
    for (std::size_t j = 0; j < a.count; ++j) rngs.push_back(root.substream(j));
    const auto clips = sample_batch(score, task, sc, s, rngs);
    json files = json::array();
    json cond = json::array();
    for (std::size_t j = 0; j < clips.size(); ++j) {
        VideoTensor v = clips[j];
        v.set_geometry(st.geometry);
        const std::string stem = numbered("sample", j, "");
        export_clip(v, dir / (stem + ".f64"), ClipFormat::f64_raw);
        files.push_back(stem + ".f64");
        if (st.geometry) {
            export_clip(v, dir / (stem + ".pgm"), ClipFormat::pgm_strip);
            files.push_back(stem + ".pgm");
        }
        double worst = 0.0;
        if (!task.frozen.empty()) {
            for (double m : conditioning_mse(v, task)) worst = std::max(worst, m);
        }
        cond.push_back(worst);
    }
    manifest["files"] = files;
    manifest["conditioning_mse"] = cond;
    write_text(dir / "task.json", task_to_json(task) + "\n");
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    out << "wrote " << clips.size() << " clip(s) to " << dir.string() << "\n";
    return exit_code::ok;
}

struct OracleArgs {
    std::string which = "unconditional";
    std::size_t samples = 20000;
    std::size_t steps = 1000;
    std::string sampler = "ddpm";
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_oracle(const OracleArgs& a, std::ostream& out, std::ostream& err)
{
    OracleOptions o;
    o.which = parse_oracle_case(a.which);
    o.samples = a.samples;
    o.steps = a.steps;
    o.sampler = parse_sampler_kind(a.sampler);
    o.seed = a.seed;
    if (o.steps < 1) throw UsageError("--steps must be positive");

    const OracleResult r = run_oracle_check(o);
    std::ostringstream report;
    report.precision(17);
    report << "case=" << oracle_case_name(o.which) << "\nsampler=" << sampler_kind_name(o.sampler)
           << "\nsteps=" << o.steps << "\n";
    if (r.report.samples == 0) {
        err << "warning: " << o.samples << " samples is below the " << r.min_samples
            << " needed for Monte-Carlo error to stay well under the tolerances; not running\n";
        out << report.str() << "min_samples=" << r.min_samples << "\nresult=INSUFFICIENT\n";
        return exit_code::insufficient;
    }
    report << to_key_values(r.report) << "max_conditioning_mse=" << r.max_conditioning_mse
           << "\nmean_tolerance=" << r.mean_tolerance << "\ncov_tolerance=" << r.cov_tolerance
           << "\nresult=" << (r.passed() ? "PASS" : "FAIL") << "\n";
    out << report.str();
    if (!a.out.empty()) {
        ensure_dir(a.out);
        write_text(fs::path(a.out) / "oracle_report.txt", report.str());
    }
    return r.passed() ? exit_code::ok : exit_code::tolerance;
}

struct EvalArgs {
    std::string real, gen, out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out)
{
    std::vector<VideoTensor> real, gen;
    try {
        real = read_clip_dir(a.real);
        gen = read_clip_dir(a.gen);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    if (real.front().n_frames() != gen.front().n_frames() || real.front().frame_dim() != gen.front().frame_dim()) {
        throw UsageError("clip shapes differ: real is " + std::to_string(real.front().n_frames()) + " x " +
                         std::to_string(real.front().frame_dim()) + ", generated is " +
                         std::to_string(gen.front().n_frames()) + " x " + std::to_string(gen.front().frame_dim()));
    }
    FrechetReport r;
    try {
        r = frechet_toy(real, gen);
    } catch (const EvalError& e) {
        throw UsageError(e.what());
    }
    out << to_key_values(r);
    ensure_dir(a.out);
    std::ostringstream csv;
    csv.precision(17);
    csv << "frechet_d2,frechet_raw,feature_dim,count_real,count_gen\n"
        << r.distance << "," << r.raw << "," << r.feature_dim << "," << r.count_a << "," << r.count_b << "\n";
    write_text(fs::path(a.out) / "eval.csv", csv.str());
    return exit_code::ok;
}

struct DataArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    std::optional<std::size_t> count;
    std::optional<std::uint64_t> seed;
};

int cmd_data(const DataArgs& a, std::ostream& out)
{
    RunConfig cfg = a.config.empty() ? parse_run_config("", a.overrides) : load_run_config(a.config, a.overrides);
    if (a.count) cfg.dataset.count = *a.count;
    if (a.seed) cfg.dataset.seed = *a.seed;
    try {
        cfg.dataset.validate();
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    ensure_dir(a.out);
    write_dataset(cfg.dataset, a.out);
    out << "wrote " << cfg.dataset.count << " " << dataset_kind_name(cfg.dataset.kind) << " clip(s) to " << a.out
        << "\n";
    return exit_code::ok;
}

}  // namespace

OracleCase parse_oracle_case(const std::string& name)
{
    if (name == "unconditional") return OracleCase::unconditional;
    if (name == "i2v" || name == "image2video") return OracleCase::image2video;
    if (name == "interpolate") return OracleCase::interpolate;
    if (name == "extend") return OracleCase::extend;
    throw UsageError("unknown oracle case '" + name + "' (expected unconditional, i2v, interpolate or extend)");
}

const char* oracle_case_name(OracleCase c)
{
    switch (c) {
    case OracleCase::unconditional: return "unconditional";
    case OracleCase::image2video: return "i2v";
    case OracleCase::interpolate: return "interpolate";
    case OracleCase::extend: return "extend";
    }
    return "?";
}

bool OracleResult::passed() const
{
    return report.samples > 0 && report.mean_abs_error < mean_tolerance && report.cov_rel_frobenius < cov_tolerance &&
           max_conditioning_mse == 0.0;
}

GaussianVideoModel oracle_law()
{
    DatasetSpec spec;
    spec.kind = DatasetKind::gaussian_ar1;
    spec.n_frames = 4;
    spec.frame_dim = 2;
    spec.rho = 0.9;
    spec.variance = 1.0;
    return ar1_law(spec);
}

OracleResult run_oracle_check(const OracleOptions& opts)
{
    const NoiseSchedule s;
    const GaussianVideoModel law = oracle_law();
    const OracleSetup setup = oracle_setup(opts, law, s);
    const auto coords = frame_coordinates(setup.free_frames, law.frame_dim);
    const GaussianLaw target = free_law(law, setup.task, coords);

    OracleResult r;
    if (opts.sampler == SamplerKind::deterministic) r.cov_tolerance = 0.2;
    r.min_samples = min_samples_for(target, r.mean_tolerance, r.cov_tolerance);
    if (opts.samples < r.min_samples) return r;

    const GaussianOracleScore score(law, s);
    SamplerConfig sc;
    sc.kind = opts.sampler;
    sc.steps = opts.steps;
    const RngStream root{opts.seed, 1, 0};
    std::vector<VideoTensor> clips;
    clips.reserve(opts.samples);
    for (std::size_t begin = 0; begin < opts.samples; begin += kOracleBatch) {
        const std::size_t end = std::min(opts.samples, begin + kOracleBatch);
        std::vector<RngStream> rngs;
        for (std::size_t j = begin; j < end; ++j) rngs.push_back(root.substream(j));
        for (auto& c : sample_batch(score, setup.task, sc, s, rngs)) clips.push_back(std::move(c));
    }
    for (const auto& c : clips) {
        if (setup.task.frozen.empty()) break;
        for (double m : conditioning_mse(c, setup.task)) r.max_conditioning_mse = std::max(r.max_conditioning_mse, m);
    }
    r.report = moment_check(clips, coords, target);
    return r;
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Video diffusion with per-frame timesteps: training, sampling and evaluation", "fvdm"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a denoiser from a run configuration");
    train_cmd->add_option("--config", ta.config, "JSON run configuration (defaults when omitted)");
    train_cmd->add_option("--set", ta.overrides, "Override a field: dotted.path=value (repeatable)");
    train_cmd->add_option("--out", ta.out, "Output directory (overrides out)");
    train_cmd->add_option("--steps", ta.steps, "Total optimizer steps (overrides train.total_steps)");
    train_cmd->add_option("--seed", ta.seed, "Run seed (overrides seed)");
    train_cmd->add_option("--resume", ta.resume, "Continue from a checkpoint");

    SampleArgs sa;
    auto* sample_cmd = app.add_subcommand("sample", "Sample clips from a checkpoint");
    sample_cmd->add_option("--ckpt", sa.ckpt, "Checkpoint file")->required();
    sample_cmd->add_option("--task", sa.task, "standard|i2v|interpolate|extend|frame|next|progressive")
        ->capture_default_str();
    sample_cmd->add_option("--frames", sa.frames, "Frames per clip (default: training clip length)");
    sample_cmd->add_option("--steps", sa.steps, "Sampler steps")->capture_default_str();
    sample_cmd->add_option("--sampler", sa.sampler, "ddim|ddpm")->capture_default_str();
    sample_cmd->add_option("--seed", sa.seed, "Sampling seed")->capture_default_str();
    sample_cmd->add_option("--image", sa.image, "Conditioning frame for i2v and frame (.pgm or .f64)");
    sample_cmd->add_option("--first", sa.first, "First frame for interpolate");
    sample_cmd->add_option("--last", sa.last, "Last frame for interpolate");
    sample_cmd->add_option("--prev", sa.prev, "Previous clip for extend and next");
    sample_cmd->add_option("--position", sa.position, "1-based frame index for frame")->capture_default_str();
    sample_cmd->add_option("--overlap", sa.overlap, "Frozen overlap for extend")->capture_default_str();
    sample_cmd->add_option("--slope", sa.slope, "Slope for progressive")->capture_default_str();
    sample_cmd->add_option("--length", sa.length, "extend only: chain clips up to this many frames");
    sample_cmd->add_option("--count", sa.count, "Number of clips")->capture_default_str();
    sample_cmd->add_option("--out", sa.out, "Output directory")->required();

    OracleArgs oa;
    auto* oracle_cmd = app.add_subcommand("oracle-check", "Sample an AR(1) law with its exact score");
    oracle_cmd->add_option("--case", oa.which, "unconditional|i2v|interpolate|extend")->capture_default_str();
    oracle_cmd->add_option("--samples", oa.samples, "Number of samples")->capture_default_str();
    oracle_cmd->add_option("--steps", oa.steps, "Sampler steps")->capture_default_str();
    oracle_cmd->add_option("--sampler", oa.sampler, "ddim|ddpm")->capture_default_str();
    oracle_cmd->add_option("--seed", oa.seed, "Seed")->capture_default_str();
    oracle_cmd->add_option("--out", oa.out, "Also write the report into this directory");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Toy Frechet distance between two clip directories");
    eval_cmd->add_option("--real", ea.real, "Directory of real .f64 clips")->required();
    eval_cmd->add_option("--gen", ea.gen, "Directory of generated .f64 clips")->required();
    eval_cmd->add_option("--out", ea.out, "Output directory for eval.csv")->required();

    DataArgs da;
    auto* data_cmd = app.add_subcommand("data", "Write a synthetic dataset directory");
    data_cmd->add_option("--config", da.config, "JSON run configuration; its dataset section is used");
    data_cmd->add_option("--set", da.overrides, "Override a field: dotted.path=value (repeatable)");
    data_cmd->add_option("--count", da.count, "Number of clips (overrides dataset.count)");
    data_cmd->add_option("--seed", da.seed, "Dataset seed (overrides dataset.seed)");
    data_cmd->add_option("--out", da.out, "Output directory")->required();

    std::vector<std::string> owned{"fvdm"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : owned) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_code::usage;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(ta, out);
        if (sample_cmd->parsed()) return cmd_sample(sa, out);
        if (oracle_cmd->parsed()) return cmd_oracle(oa, out, err);
        if (eval_cmd->parsed()) return cmd_eval(ea, out);
        if (data_cmd->parsed()) return cmd_data(da, out);
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::divergence;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const TaskError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::divergence;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    }
    return exit_code::usage;
}

}  // namespace fvdm
