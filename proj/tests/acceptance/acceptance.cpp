// Acceptance checks. Prints one PASS/FAIL line per criterion; `--only N`
// runs a single criterion. Exit status is 0 iff every criterion run passed.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fvdm/autodiff.hpp"
#include "fvdm/cli.hpp"
#include "fvdm/data.hpp"
#include "fvdm/denoiser.hpp"
#include "fvdm/diffusion.hpp"
#include "fvdm/eval.hpp"
#include "fvdm/gaussian.hpp"
#include "fvdm/tasks.hpp"
#include "fvdm/training.hpp"

using namespace fvdm;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kMarginalRel = 0.01;
constexpr double kMarginalAbs = 0.01;
constexpr double kMarginalCpu = 60.0;
constexpr double kOracleCpu = 300.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradCpu = 30.0;
constexpr double kIdentityTol = 1e-15;
constexpr double kPtssP = 0.2;
constexpr double kPtssBand = 0.015;
constexpr double kFrechetFactor = 10.0;
constexpr double kLossRatio = 0.25;
constexpr double kTrainCpu = 1800.0;
constexpr int kAblationWins = 3;

const NoiseSchedule kSchedule;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double cpu_seconds()
{
    return static_cast<double>(std::clock()) / CLOCKS_PER_SEC;
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double sample_mean(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v)
{
    const double m = sample_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

ParamSet randomized(ParamSet params, RngStream& rng, double scale)
{
    for (auto& [name, t] : params) {
        for (double& v : t.data()) v += scale * rng.normal();
    }
    return params;
}

// 1. Euler-Maruyama marginals against mean_coef and std. Paths from +1 and
// -1 share their noise, so half the difference is the mean coefficient and
// half the sum the noise term.
Outcome forward_marginals()
{
    const double t0 = cpu_seconds();
    const std::size_t d = 4, paths = 10000;
    const Vtv tau_end({0.25, 0.5, 1.0});
    const std::size_t n = tau_end.size();
    const VideoTensor plus(Tensor({n, d}, 1.0)), minus(Tensor({n, d}, -1.0));
    std::vector<std::vector<double>> coef(n), noise(n);
    RngStream rng{101, 0};
    for (std::size_t p = 0; p < paths; ++p) {
        RngStream twin = rng;
        const auto a = simulate_forward_sde(plus, tau_end, kSchedule, 1e-3, rng);
        const auto b = simulate_forward_sde(minus, tau_end, kSchedule, 1e-3, twin);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                coef[i].push_back(0.5 * (a.frame(i)[j] - b.frame(i)[j]));
                noise[i].push_back(0.5 * (a.frame(i)[j] + b.frame(i)[j]));
            }
        }
    }
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = marginal_coeffs(kSchedule, tau_end[i]);
        const double m = sample_mean(coef[i]), sd = sample_std(noise[i]);
        const double m_rel = m / c.mean_coef - 1.0, sd_rel = sd / c.std - 1.0;
        ok = ok && std::abs(sd_rel) < kMarginalRel && std::abs(m - c.mean_coef) < kMarginalAbs;
        if (tau_end[i] <= 0.5) ok = ok && std::abs(m_rel) < kMarginalRel;
        detail += fmt("t=%.2f mean_coef %.5f/%.5f (%+.2f%%) std %.5f/%.5f (%+.2f%%); ", tau_end[i], m, c.mean_coef,
                      100 * m_rel, sd, c.std, 100 * sd_rel);
    }
    const double cpu = cpu_seconds() - t0;
    ok = ok && cpu < kMarginalCpu;
    return {ok, detail + fmt("cpu %.1fs", cpu)};
}

std::string oracle_line(const char* name, const OracleResult& r, double cpu)
{
    return fmt("%s mean %.4f cov %.4f (<%.2f) cond_mse %g cpu %.0fs; ", name, r.report.mean_abs_error,
               r.report.cov_rel_frobenius, r.cov_tolerance, r.max_conditioning_mse, cpu);
}

// 2. Unconditional AR(1) law sampled with its exact score.
Outcome sampler_oracle()
{
    bool ok = true;
    std::string detail;
    const struct {
        const char* name;
        SamplerKind kind;
        std::size_t steps;
    } runs[] = {{"ancestral K=1000", SamplerKind::ancestral, 1000}, {"ddim K=200", SamplerKind::deterministic, 200}};
    for (const auto& run : runs) {
        OracleOptions o;
        o.which = OracleCase::unconditional;
        o.samples = 20000;
        o.sampler = run.kind;
        o.steps = run.steps;
        o.seed = 11;
        const double t0 = cpu_seconds();
        const auto r = run_oracle_check(o);
        const double cpu = cpu_seconds() - t0;
        ok = ok && r.passed() && cpu < kOracleCpu;
        detail += oracle_line(run.name, r, cpu);
    }
    return {ok, detail};
}

// 3. Conditional cases against the exact conditional moments.
Outcome conditional_oracles()
{
    bool ok = true;
    std::string detail;
    for (auto which : {OracleCase::image2video, OracleCase::interpolate, OracleCase::extend}) {
        OracleOptions o;
        o.which = which;
        o.samples = 20000;
        o.sampler = SamplerKind::ancestral;
        o.steps = 1000;
        o.seed = 12;
        const double t0 = cpu_seconds();
        const auto r = run_oracle_check(o);
        const double cpu = cpu_seconds() - t0;
        ok = ok && r.passed() && r.max_conditioning_mse == 0.0 && cpu < kOracleCpu;
        detail += oracle_line(oracle_case_name(which), r, cpu);
    }
    return {ok, detail};
}

// Single-clock sampler written against the closed-form update rules only.
VideoTensor scalar_clock_sampler(const ScoreFunction& score, std::size_t n, std::size_t d, std::size_t steps,
                                 SamplerKind kind, RngStream& rng)
{
    Tensor x({n, d});
    for (double& v : x.data()) v = rng.normal();
    const auto grid = time_grid(kSchedule, steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = grid[k], t_next = grid[k + 1];
        const Tensor eps = score.evaluate(VideoTensor(x), Vtv::broadcast(t, n)).tensor();
        const double b_now = kSchedule.accumulated_beta(t), b_next = kSchedule.accumulated_beta(t_next);
        if (kind == SamplerKind::deterministic) {
            const double m = std::exp(-0.5 * b_now), sd = std::sqrt(-std::expm1(-b_now));
            const double m2 = std::exp(-0.5 * b_next), sd2 = std::sqrt(-std::expm1(-b_next));
            for (std::size_t e = 0; e < x.size(); ++e) {
                const double x0_hat = (x[e] - sd * eps[e]) / m;
                x[e] = m2 * x0_hat + sd2 * eps[e];
            }
        } else {
            const double beta_k = -std::expm1(-(b_now - b_next));
            const double keep = std::exp(-0.5 * (b_now - b_next));
            const double v_now = -std::expm1(-b_now), v_next = -std::expm1(-b_next);
            const double c_eps = beta_k / std::sqrt(v_now);
            const double c_noise = std::sqrt(beta_k * v_next / v_now);
            for (std::size_t e = 0; e < x.size(); ++e) {
                const double z = rng.normal();
                x[e] = (x[e] - c_eps * eps[e]) / keep + c_noise * z;
            }
        }
    }
    return VideoTensor(x);
}

// 4. Standard task with broadcast times against the scalar-clock sampler.
Outcome broadcast_equivalence()
{
    const std::size_t n = 4, d = 2;
    const GaussianOracleScore oracle(oracle_law(), kSchedule);
    auto cfg = DenoiserConfig::from_preset("toy-S", d);
    RngStream init{41, 0};
    const DenoiserScore net(cfg, randomized(init_denoiser(cfg, init), init, 0.05));

    std::size_t cases = 0, equal = 0;
    const ScoreFunction* scores[] = {&oracle, &net};
    for (const auto* score : scores) {
        for (auto kind : {SamplerKind::deterministic, SamplerKind::ancestral}) {
            for (std::size_t steps : {1u, 7u, 50u}) {
                for (std::uint64_t seed : {1u, 2u}) {
                    RngStream a{seed, 3}, b{seed, 3};
                    const auto got = sample(*score, standard_task(n, steps, kSchedule), {kind, steps}, kSchedule, a);
                    const auto want = scalar_clock_sampler(*score, n, d, steps, kind, b);
                    ++cases;
                    if (bit_equal(got.tensor(), want.tensor()) && a == b) ++equal;
                }
            }
        }
    }
    return {equal == cases, fmt("%zu/%zu runs bit-identical (oracle and toy-S scores, ddim and ancestral, K in {1,7,50})",
                                equal, cases)};
}

// 5. Reverse-mode gradient of the full training loss against finite
// differences. Every evaluation replays the same PTSS and noise draws.
Outcome gradient_check()
{
    const double t0 = cpu_seconds();
    const auto cfg = DenoiserConfig::from_preset("toy-S", 3);
    RngStream rng{51, 0};
    const auto params = randomized(init_denoiser(cfg, rng), rng, 0.1);
    const VideoTensor x0(gaussian(rng, {2, 3}));
    ad::Tape tape;
    const auto vars = register_parameters(tape, params);
    const RngStream draws{52, 0};
    PtssConfig per_frame;
    per_frame.p = 1.0;
    auto loss = [&](ad::Tape& t) {
        RngStream r = draws;
        return denoising_loss(t, denoiser_eps_model(cfg, vars), x0, kSchedule, per_frame, Weighting::uniform_eps, r);
    };
    const auto report = ad::grad_check(tape, loss, kGradTol);
    const double cpu = cpu_seconds() - t0;
    std::size_t worst = 0;
    for (std::size_t k = 1; k < report.max_rel_error.size(); ++k) {
        if (report.max_rel_error[k] > report.max_rel_error[worst]) worst = k;
    }
    return {report.passed && report.worst < kGradTol && cpu < kGradCpu,
            fmt("%zu parameter tensors, worst relative error %.2e (%s), cpu %.1fs", report.names.size(),
                report.worst, report.names.empty() ? "-" : report.names[worst].c_str(), cpu)};
}

// 6. Every block residual of a fresh model is zero.
Outcome identity_at_init()
{
    double worst = 0.0;
    std::size_t count = 0;
    const DenoiserConfig configs[] = {DenoiserConfig::from_preset("toy-S", 3), DenoiserConfig::from_preset("toy-B", 5),
                                      DenoiserConfig::from_preset("toy-S", ImageGeometry{16, 16, 1}, 4)};
    RngStream rng{61, 0};
    for (const auto& cfg : configs) {
        const auto params = init_denoiser(cfg, rng);
        const Tensor x = gaussian(rng, {6, cfg.frame_dim});
        const Vtv tau({0.0, 0.02, 0.3, 0.5, 0.9, 1.0});
        std::vector<Tensor> residuals;
        ForwardOptions trace;
        trace.residuals = &residuals;
        denoiser_forward(cfg, params, x, tau, trace);
        for (const auto& r : residuals) {
            for (double v : r.data()) worst = std::max(worst, std::abs(v));
        }
        count += residuals.size();
    }
    return {worst < kIdentityTol && count > 0,
            fmt("%zu residual contributions (toy-S, toy-B, toy-S 16x16 patch 4), max |entry| %g", count, worst)};
}

// 7. Frequency of non-constant time vectors drawn by PTSS.
Outcome ptss_statistics()
{
    const std::size_t draws = 10000, n = 8;
    PtssConfig cfg;
    cfg.p = kPtssP;
    RngStream rng{71, 0};
    std::size_t distinct = 0, mismatched = 0;
    for (std::size_t k = 0; k < draws; ++k) {
        const auto s = ptss_sample(cfg, kSchedule, n, rng);
        if (!s.tau.is_constant()) ++distinct;
        if (s.per_frame == s.tau.is_constant()) ++mismatched;
    }
    const double freq = static_cast<double>(distinct) / draws;
    return {std::abs(freq - kPtssP) <= kPtssBand && mismatched == 0,
            fmt("%zu/%zu non-constant, frequency %.4f (band %.3f..%.3f)", distinct, draws, freq, kPtssP - kPtssBand,
                kPtssP + kPtssBand)};
}

std::vector<VideoTensor> sample_clips(const TrainState& st, const ParamSet& params, std::size_t count,
                                      std::size_t steps)
{
    const DenoiserScore score(st.model, params, st.geometry);
    std::vector<RngStream> rngs;
    for (std::size_t j = 0; j < count; ++j) rngs.push_back(RngStream{81, 0}.substream(j));
    return sample_batch(score, standard_task(st.n_frames, steps, st.schedule), {SamplerKind::deterministic, steps},
                        st.schedule, rngs);
}

// 8. toy-S on 16x16 bouncing-ball clips.
Outcome training_efficacy()
{
    DatasetSpec spec;
    std::vector<VideoTensor> data;
    for (std::size_t i = 0; i < spec.count; ++i) data.push_back(generate(spec, i));
    TrainConfig cfg;
    cfg.total_steps = 20000;
    cfg.batch_size = 4;
    cfg.learning_rate = 3e-4;
    cfg.seed = 8;
    const auto model = DenoiserConfig::from_preset("toy-S", *spec.geometry(), 4);
    auto st = init_train_state(cfg, model, spec.n_frames, spec.geometry(), kSchedule);
    const ParamSet fresh = st.params;

    const double t0 = cpu_seconds();
    const auto trace = train(st, cfg, data);
    const double train_cpu = cpu_seconds() - t0;
    const double initial = tail_mean(std::span(trace).first(100), 100);
    const double final = tail_mean(trace, 100);

    const std::size_t count = 512, steps = 50;
    DatasetSpec held = spec;
    held.seed = 777;
    std::vector<VideoTensor> real;
    for (std::size_t i = 0; i < count; ++i) real.push_back(generate(held, i));
    const auto trained = frechet_toy(real, sample_clips(st, st.params, count, steps));
    const auto untrained = frechet_toy(real, sample_clips(st, fresh, count, steps));
    const double ratio = final / initial;
    const bool ok = trained.distance * kFrechetFactor <= untrained.distance && ratio < kLossRatio &&
                    train_cpu < kTrainCpu;
    return {ok, fmt("frechet trained %.3f vs untrained %.3f (%.1fx, need %.0fx); smoothed loss %.4f -> %.4f "
                    "(%.1f%%, need <%.0f%%); train cpu %.0fs",
                    trained.distance, untrained.distance, untrained.distance / trained.distance, kFrechetFactor,
                    initial, final, 100 * ratio, 100 * kLossRatio, train_cpu)};
}

// 9. p = 0.2 against p = 0 on interpolation of held-out AR(1) clips.
Outcome ablation_direction()
{
    DatasetSpec spec;
    spec.kind = DatasetKind::gaussian_ar1;
    spec.frame_dim = 2;
    spec.n_frames = 8;
    spec.rho = 0.9;
    spec.count = 1024;
    std::vector<VideoTensor> data;
    for (std::size_t i = 0; i < spec.count; ++i) data.push_back(generate(spec, i));
    DatasetSpec held = spec;
    held.seed = 777;
    const std::size_t eval_clips = 64, steps = 50;
    const auto model = DenoiserConfig::from_preset("toy-S", spec.dim());

    auto interpolation_mse = [&](double p, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.total_steps = 2000;
        cfg.batch_size = 16;
        cfg.learning_rate = 1e-3;
        cfg.seed = seed;
        cfg.ptss.p = p;
        auto st = init_train_state(cfg, model, spec.n_frames, std::nullopt, kSchedule);
        train(st, cfg, data);
        const DenoiserScore score(st.model, st.params);
        double total = 0.0;
        std::size_t entries = 0;
        for (std::size_t c = 0; c < eval_clips; ++c) {
            const auto clip = generate(held, c);
            const auto task = interpolate_task(clip.frame(0), clip.frame(spec.n_frames - 1), spec.n_frames, steps,
                                               kSchedule);
            RngStream rng{1000 + c, 0};
            const auto out = sample(score, task, {SamplerKind::deterministic, steps}, kSchedule, rng);
            for (std::size_t i = 1; i + 1 < spec.n_frames; ++i) {
                for (std::size_t j = 0; j < spec.frame_dim; ++j) {
                    const double e = out.frame(i)[j] - clip.frame(i)[j];
                    total += e * e;
                    ++entries;
                }
            }
        }
        return total / static_cast<double>(entries);
    };

    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const double with = interpolation_mse(0.2, seed), without = interpolation_mse(0.0, seed);
        if (with < without) ++wins;
        detail += fmt("seed %llu %.4f vs %.4f; ", static_cast<unsigned long long>(seed), with, without);
    }
    return {wins >= kAblationWins, fmt("p=0.2 wins %d/5 (need %d); interpolation mse p=0.2 vs p=0: ", wins,
                                       kAblationWins) + detail};
}

std::string read_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::string& text)
{
    std::ofstream(p, std::ios::binary) << text;
}

using Snapshot = std::map<std::string, std::string>;

Snapshot snapshot(const fs::path& dir)
{
    Snapshot s;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) s[fs::relative(e.path(), dir).string()] = read_bytes(e.path());
    }
    return s;
}

struct CliRun {
    std::vector<std::string> args;
    int code = 0;
    std::string out;
};

// Runs every command once in `dir`, which must not exist yet.
std::vector<CliRun> run_commands(const fs::path& dir)
{
    fs::create_directories(dir);
    const std::string d = dir.string();
    write_bytes(dir / "cfg.json", R"({
  "seed": 4,
  "dataset": {"kind": "moving_bar", "n_frames": 4, "height": 4, "width": 8, "bar_width": 2, "count": 8},
  "train": {"batch_size": 2, "total_steps": 12, "checkpoint_interval": 6}
})");
    DatasetSpec bar;
    bar.kind = DatasetKind::moving_bar;
    bar.n_frames = 4;
    bar.height = 4;
    bar.width = 8;
    bar.bar_width = 2;
    bar.seed = 5;
    const VideoTensor clip = generate(bar, 0);
    export_clip(clip.frames(0, 1), dir / "first.pgm", ClipFormat::pgm_strip);
    export_clip(clip.frames(3, 4), dir / "last.f64", ClipFormat::f64_raw);
    export_clip(clip, dir / "prev.f64", ClipFormat::f64_raw);

    const std::string ckpt = d + "/run/final.ckpt";
    const std::vector<std::string> ar1{"--set", "dataset.kind=gaussian_ar1", "--set", "dataset.frame_dim=2",
                                       "--set", "dataset.n_frames=4", "--count", "400"};
    std::vector<std::vector<std::string>> commands = {
        {"data", "--config", d + "/cfg.json", "--out", d + "/data"},
        {"train", "--config", d + "/cfg.json", "--out", d + "/run"},
        {"train", "--config", d + "/cfg.json", "--out", d + "/resumed", "--resume",
         d + "/run/checkpoints/step_000006.ckpt"},
        {"sample", "--ckpt", ckpt, "--count", "2", "--out", d + "/standard"},
        {"sample", "--ckpt", ckpt, "--sampler", "ddpm", "--steps", "20", "--count", "2", "--out", d + "/ddpm"},
        {"sample", "--ckpt", ckpt, "--task", "i2v", "--image", d + "/first.pgm", "--out", d + "/i2v"},
        {"sample", "--ckpt", ckpt, "--task", "interpolate", "--first", d + "/first.pgm", "--last", d + "/last.f64",
         "--sampler", "ddpm", "--out", d + "/interpolate"},
        {"sample", "--ckpt", ckpt, "--task", "extend", "--prev", d + "/prev.f64", "--out", d + "/extend"},
        {"sample", "--ckpt", ckpt, "--task", "extend", "--length", "10", "--out", d + "/long"},
        {"sample", "--ckpt", ckpt, "--task", "frame", "--image", d + "/last.f64", "--position", "3", "--out",
         d + "/frame"},
        {"sample", "--ckpt", ckpt, "--task", "next", "--prev", d + "/prev.f64", "--out", d + "/next"},
        {"sample", "--ckpt", ckpt, "--task", "progressive", "--slope", "0.5", "--out", d + "/progressive"},
        {"oracle-check", "--case", "interpolate", "--samples", "6400", "--steps", "50", "--sampler", "ddim", "--out",
         d + "/oracle"},
        {"data", "--seed", "1", "--out", d + "/ar1_a"},
        {"data", "--seed", "2", "--out", d + "/ar1_b"},
        {"eval", "--real", d + "/ar1_a", "--gen", d + "/ar1_b", "--out", d + "/eval"},
    };
    for (auto& c : commands) {
        if (c[0] == "data" && c[1] == "--seed") c.insert(c.end(), ar1.begin(), ar1.end());
    }
    std::vector<CliRun> runs;
    for (const auto& args : commands) {
        std::ostringstream out, err;
        CliRun r{args, run_cli(args, out, err), out.str()};
        runs.push_back(std::move(r));
    }
    return runs;
}

// 10. Every CLI command twice in the same place with the same inputs; a
// training rerun from the written resolved config; checkpoint load/save.
Outcome reproducibility()
{
    const fs::path dir = fs::temp_directory_path() / "fvdm_acceptance_repro";
    const fs::path spare = fs::temp_directory_path() / "fvdm_acceptance_repro_cfg.json";
    fs::remove_all(dir);
    const auto first = run_commands(dir);
    const Snapshot a = snapshot(dir);
    fs::remove_all(dir);
    const auto second = run_commands(dir);
    const Snapshot b = snapshot(dir);

    std::vector<std::string> problems;
    std::size_t unexpected_exit = 0;
    for (std::size_t k = 0; k < first.size(); ++k) {
        const bool oracle = first[k].args[0] == "oracle-check";
        if (first[k].code != 0 && !(oracle && first[k].code == exit_code::tolerance)) ++unexpected_exit;
        if (first[k].code != second[k].code || first[k].out != second[k].out) {
            problems.push_back(first[k].args[0] + " " + first[k].args.back());
        }
    }
    std::size_t differing = 0;
    for (const auto& [name, bytes] : a) {
        const auto it = b.find(name);
        if (it == b.end() || it->second != bytes) ++differing;
    }
    if (a.size() != b.size()) ++differing;

    // Training from the resolved config alone reproduces the run directory.
    write_bytes(spare, a.at("run/resolved_config.json"));
    fs::remove_all(dir / "run");
    std::ostringstream out, err;
    const int code = run_cli(std::vector<std::string>{"train", "--config", spare.string()}, out, err);
    std::size_t resolved_mismatch = code == 0 ? 0 : 1;
    for (const auto& [name, bytes] : a) {
        if (name.rfind("run/", 0) != 0) continue;
        const fs::path p = dir / name;
        if (!fs::exists(p) || read_bytes(p) != bytes) ++resolved_mismatch;
    }
    fs::remove(spare);

    // Checkpoint round trip.
    std::size_t ckpts = 0, ckpt_mismatch = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "run")) {
        if (e.path().extension() != ".ckpt") continue;
        const fs::path copy = dir / "roundtrip.ckpt";
        save_checkpoint(load_checkpoint(e.path()), copy);
        ++ckpts;
        if (read_bytes(copy) != read_bytes(e.path())) ++ckpt_mismatch;
    }
    fs::remove_all(dir);

    const bool ok = problems.empty() && differing == 0 && unexpected_exit == 0 && resolved_mismatch == 0 &&
                    ckpts >= 3 && ckpt_mismatch == 0;
    std::string detail = fmt("%zu commands, %zu files compared, %zu differ, %zu unexpected exit codes; "
                             "rerun from resolved config: %zu mismatches; %zu checkpoints round-tripped, %zu differ",
                             first.size(), a.size(), differing, unexpected_exit, resolved_mismatch, ckpts,
                             ckpt_mismatch);
    for (const auto& p : problems) detail += "; output differs: " + p;
    return {ok, detail};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria()
{
    static const std::vector<Criterion> list = {
        {1, "forward marginals", forward_marginals},
        {2, "unconditional sampler oracle", sampler_oracle},
        {3, "conditional oracles", conditional_oracles},
        {4, "broadcast equivalence", broadcast_equivalence},
        {5, "loss gradient", gradient_check},
        {6, "identity at init", identity_at_init},
        {7, "PTSS statistics", ptss_statistics},
        {8, "training efficacy", training_efficacy},
        {9, "ablation direction", ablation_direction},
        {10, "reproducibility", reproducibility},
    };
    return list;
}

}  // namespace

int main(int argc, char** argv)
{
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
            return 2;
        }
    }
    if (only < 0 || only > static_cast<int>(criteria().size())) {
        std::fprintf(stderr, "no criterion %d\n", only);
        return 2;
    }
    bool all = true;
    for (const auto& c : criteria()) {
        if (only != 0 && c.id != only) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::printf("criterion %d %s: %s | %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
