#include "fvdm/training.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "fvdm/diffusion.hpp"

namespace fvdm {

namespace {

constexpr char kMagic[] = "FVDM1\n";
constexpr std::size_t kMagicLen = 6;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;
constexpr std::uint64_t kInitStream = 1, kBatchStream = 2, kLossStream = 3;
constexpr double kDivergenceFactor = 10.0;
constexpr std::uint64_t kDivergencePatience = 100;

std::string tau_string(const Vtv& tau)
{
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < tau.size(); ++i) os << (i ? ", " : "") << tau[i];
    os << "]";
    return os.str();
}

Tensor row_factors(const std::vector<double>& per_frame, std::size_t d)
{
    Tensor t({per_frame.size(), d});
    for (std::size_t i = 0; i < per_frame.size(); ++i) {
        for (double& v : t.row(i)) v = per_frame[i];
    }
    return t;
}

Tensor scalar(double v)
{
    return Tensor({1}, v);
}

double scalar_of(const NamedTensors& entries, const std::map<std::string, std::size_t>& index, const std::string& name,
                 std::size_t size)
{
    const auto it = index.find(name);
    if (it == index.end()) throw CheckpointError("checkpoint is missing entry '" + name + "'");
    const Tensor& t = entries[it->second].second;
    if (t.size() != size) throw CheckpointError("checkpoint entry '" + name + "' has the wrong size");
    return t[0];
}

const Tensor& entry(const NamedTensors& entries, const std::map<std::string, std::size_t>& index,
                    const std::string& name)
{
    const auto it = index.find(name);
    if (it == index.end()) throw CheckpointError("checkpoint is missing entry '" + name + "'");
    return entries[it->second].second;
}

Tensor pack_rng(const RngStream& r)
{
    auto halves = [](std::uint64_t v) { return std::pair<double, double>(double(v >> 32), double(v & 0xffffffffu)); };
    const auto [a, b] = halves(r.seed);
    const auto [c, d] = halves(r.stream_id);
    const auto [e, f] = halves(r.counter);
    return Tensor({6}, {a, b, c, d, e, f});
}

RngStream unpack_rng(const Tensor& t)
{
    if (t.size() != 6) throw CheckpointError("rng entry must have 6 values");
    auto join = [&](std::size_t k) {
        const double hi = t[k], lo = t[k + 1];
        if (!(hi >= 0 && hi < 4294967296.0 && lo >= 0 && lo < 4294967296.0) || hi != std::floor(hi) ||
            lo != std::floor(lo)) {
            throw CheckpointError("rng entry holds a non-integer word");
        }
        return (static_cast<std::uint64_t>(hi) << 32) | static_cast<std::uint64_t>(lo);
    };
    return RngStream{join(0), join(2), join(4)};
}

void write_u64(std::ostream& out, std::uint64_t v)
{
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out.write(b, 8);
}

class Reader {
public:
    explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint64_t u64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
        pos_ += 8;
        return v;
    }

    std::string bytes(std::size_t n)
    {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const
    {
        if (remaining() < n) throw CheckpointError("truncated file");
    }

    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

const char* weighting_name(Weighting w)
{
    return w == Weighting::uniform_eps ? "uniform-eps" : "sigma2-score";
}

Weighting parse_weighting(const std::string& name)
{
    if (name == "uniform-eps") return Weighting::uniform_eps;
    if (name == "sigma2-score") return Weighting::sigma2_score;
    throw TrainingError("unknown weighting mode '" + name + "' (expected uniform-eps or sigma2-score)");
}

void TrainConfig::validate() const
{
    ptss.validate();
    if (batch_size < 1) throw TrainingError("batch_size must be >= 1");
    if (total_steps < 1) throw TrainingError("total_steps must be >= 1");
    if (!(learning_rate > 0.0)) throw TrainingError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw TrainingError("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw TrainingError("adam eps must be positive");
    if (!(clip_norm >= 0.0)) throw TrainingError("clip_norm must be >= 0");
}

ad::Var denoising_loss(ad::Tape& tape, const EpsModel& model, const VideoTensor& x0, const NoiseSchedule& s,
                       const PtssConfig& ptss, Weighting weighting, RngStream& rng, LossDraw* draw)
{
    x0.tensor().require_finite("training clip");
    const std::size_t n = x0.n_frames(), d = x0.frame_dim();
    const PtssSample ps = ptss_sample(ptss, s, n, rng);
    const Perturbed p = perturb(x0, ps.tau, s, rng);
    if (draw) *draw = {ps.tau, ps.per_frame};

    const ad::Var eps_hat = model(tape, tape.constant(p.xt.tensor()), ps.tau);
    if (eps_hat.shape() != x0.tensor().shape()) throw TrainingError("model output shape does not match the clip");

    ad::Var loss;
    if (weighting == Weighting::uniform_eps) {
        const ad::Var diff = eps_hat - tape.constant(p.eps.tensor());
        loss = ad::mean(diff * diff);
    } else {
        std::vector<double> neg_inv_std(n), var(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double sd = marginal_coeffs(s, ps.tau[i]).std;
            neg_inv_std[i] = -1.0 / sd;
            var[i] = sd * sd;
        }
        const Tensor factor = row_factors(neg_inv_std, d);
        const ad::Var score_hat = eps_hat * tape.constant(factor);
        const ad::Var score = tape.constant(hadamard(p.eps.tensor(), factor));
        const ad::Var diff = score_hat - score;
        loss = ad::mean(tape.constant(row_factors(var, d)) * diff * diff);
    }
    if (!std::isfinite(loss.value()[0])) {
        throw TrainingError("non-finite loss at tau = " + tau_string(ps.tau));
    }
    return loss;
}

EpsModel denoiser_eps_model(const DenoiserConfig& cfg, std::span<const ad::Var> params)
{
    return [cfg, params](ad::Tape&, ad::Var xt, const Vtv& tau) { return denoiser_forward(cfg, params, xt, tau); };
}

TrainState init_train_state(const TrainConfig& cfg, const DenoiserConfig& model, std::size_t n_frames,
                            std::optional<ImageGeometry> geometry, const NoiseSchedule& s)
{
    cfg.validate();
    model.validate();
    s.validate();
    if (n_frames < 1) throw TrainingError("n_frames must be positive");
    if (geometry && geometry->pixels() != model.frame_dim) {
        throw TrainingError("image geometry does not match frame_dim");
    }
    TrainState st;
    st.model = model;
    st.model.schedule = s;
    st.schedule = s;
    st.n_frames = n_frames;
    st.geometry = geometry;
    RngStream init{cfg.seed, kInitStream};
    st.params = init_denoiser(model, init);
    for (const auto& [name, t] : st.params) {
        st.adam_m.emplace_back(t.shape());
        st.adam_v.emplace_back(t.shape());
    }
    st.batch_rng = RngStream{cfg.seed, kBatchStream};
    st.loss_rng = RngStream{cfg.seed, kLossStream};
    return st;
}

std::string trace_csv_header()
{
    return "step,loss,grad_norm,ptss_branch,clipped";
}

std::string trace_csv_row(const TraceRow& row)
{
    std::ostringstream os;
    os.precision(17);
    os << row.step << "," << row.loss << "," << row.grad_norm << "," << row.ptss_branch << ","
       << (row.clipped ? 1 : 0);
    return os.str();
}

void adam_update(std::vector<Tensor>& params, const std::vector<Tensor>& grads, std::vector<Tensor>& m,
                 std::vector<Tensor>& v, std::uint64_t step, const AdamConfig& cfg)
{
    if (step < 1) throw TrainingError("adam step count is 1-based");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto w = params[p].data();
        const auto g = grads[p].data();
        auto mm = m[p].data();
        auto vv = v[p].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            mm[i] = cfg.beta1 * mm[i] + (1.0 - cfg.beta1) * g[i];
            vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = mm[i] / c1, vhat = vv[i] / c2;
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

std::vector<TraceRow> train(TrainState& state, const TrainConfig& cfg, std::span<const VideoTensor> data,
                            const TrainHooks& hooks)
{
    cfg.validate();
    if (data.empty()) throw TrainingError("training set is empty");
    for (const auto& clip : data) {
        if (clip.n_frames() != state.n_frames || clip.frame_dim() != state.model.frame_dim) {
            throw TrainingError("training clip shape differs from the model (" + std::to_string(state.n_frames) +
                                " x " + std::to_string(state.model.frame_dim) + ")");
        }
    }

    ad::Tape tape;
    const auto vars = register_parameters(tape, state.params);
    const EpsModel model = denoiser_eps_model(state.model, vars);
    const AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps};
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

    std::vector<Tensor> params(state.params.size()), grads(state.params.size());
    for (std::size_t p = 0; p < params.size(); ++p) params[p] = state.params[p].second;

    std::vector<TraceRow> trace;
    for (std::uint64_t step = state.step + 1; step <= cfg.total_steps; ++step) {
        tape.clear();
        TraceRow row;
        row.step = step;
        ad::Var total;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const auto idx = static_cast<std::size_t>(state.batch_rng.below(data.size()));
            LossDraw draw;
            const ad::Var l =
                denoising_loss(tape, model, data[idx], state.schedule, cfg.ptss, cfg.weighting, state.loss_rng, &draw);
            total = b == 0 ? l : total + l;
            row.ptss_branch += draw.per_frame ? 1 : 0;
        }
        const ad::Var loss = ad::scale(total, inv_batch);
        tape.backward(loss);
        row.loss = loss.value()[0];

        double sq = 0.0;
        for (std::size_t p = 0; p < vars.size(); ++p) {
            grads[p] = tape.grad(vars[p].id);
            for (double g : grads[p].data()) sq += g * g;
        }
        row.grad_norm = std::sqrt(sq);
        if (!std::isfinite(row.grad_norm)) {
            throw TrainingError("non-finite gradient norm at step " + std::to_string(step));
        }
        if (cfg.clip_norm > 0.0 && row.grad_norm > cfg.clip_norm) {
            row.clipped = true;
            const double k = cfg.clip_norm / row.grad_norm;
            for (auto& g : grads) {
                for (double& v : g.data()) v *= k;
            }
        }

        adam_update(params, grads, state.adam_m, state.adam_v, step, adam);
        for (std::size_t p = 0; p < vars.size(); ++p) {
            tape.parameter_value(vars[p].id) = params[p];
            state.params[p].second = params[p];
        }
        state.step = step;
        if (step == 1) state.initial_loss = row.loss;
        state.over_count = row.loss > kDivergenceFactor * state.initial_loss ? state.over_count + 1 : 0;

        trace.push_back(row);
        if (hooks.on_step) hooks.on_step(row);
        if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 && hooks.on_checkpoint) {
            hooks.on_checkpoint(state);
        }
        if (state.over_count >= kDivergencePatience) {
            std::ostringstream os;
            os << "training diverged at step " << step << ": loss " << row.loss << " stayed above "
               << kDivergenceFactor << "x the initial loss " << state.initial_loss << " for " << state.over_count
               << " consecutive steps (last grad norm " << row.grad_norm << ")";
            throw DivergenceError(os.str());
        }
    }
    return trace;
}

double tail_mean(std::span<const TraceRow> trace, std::size_t window)
{
    if (trace.empty()) throw TrainingError("empty loss trace");
    const std::size_t n = std::min(window, trace.size());
    double s = 0.0;
    for (std::size_t i = trace.size() - n; i < trace.size(); ++i) s += trace[i].loss;
    return s / static_cast<double>(n);
}

void write_tensors(const NamedTensors& entries, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(kMagic, kMagicLen);
    write_u64(out, entries.size());
    for (const auto& [name, t] : entries) {
        write_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(out, t.rank());
        for (auto e : t.shape()) write_u64(out, e);
        for (double v : t.data()) write_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw CheckpointError("write failed for " + path.string());
}

NamedTensors read_tensors(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read " + path.string());
    Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
    if (r.remaining() < kMagicLen || r.bytes(kMagicLen) != std::string(kMagic, kMagicLen)) {
        throw CheckpointError("bad magic");
    }
    const std::uint64_t count = r.u64();
    NamedTensors entries;
    for (std::uint64_t e = 0; e < count; ++e) {
        const std::uint64_t len = r.u64();
        if (len > r.remaining()) throw CheckpointError("truncated file");
        std::string name = r.bytes(len);
        const std::uint64_t rank = r.u64();
        if (rank == 0 || rank > 8) throw CheckpointError("entry '" + name + "' has invalid rank " + std::to_string(rank));
        Shape shape;
        std::uint64_t elems = 1;
        for (std::uint64_t k = 0; k < rank; ++k) {
            const std::uint64_t ext = r.u64();
            if (ext == 0 || __builtin_mul_overflow(elems, ext, &elems) || elems > kMaxElements) {
                throw CheckpointError("extent overflow in entry '" + name + "'");
            }
            shape.push_back(ext);
        }
        if (elems > r.remaining() / 8) throw CheckpointError("truncated file");
        std::vector<double> values(elems);
        for (double& v : values) v = std::bit_cast<double>(r.u64());
        entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (r.remaining() != 0) throw CheckpointError("trailing bytes after the last entry");
    return entries;
}

void save_checkpoint(const TrainState& st, const std::filesystem::path& path)
{
    NamedTensors e;
    const auto& m = st.model;
    e.emplace_back("config/model",
                   Tensor({9}, {double(m.frame_dim), double(m.embed_dim), double(m.n_layers), double(m.n_heads),
                                double(m.mlp_ratio), double(m.patch_size), double(m.image_height),
                                double(m.image_width), m.v_prediction ? 1.0 : 0.0}));
    e.emplace_back("config/schedule",
                   Tensor({4}, {st.schedule.beta_min, st.schedule.beta_max, st.schedule.horizon, st.schedule.t_min}));
    const ImageGeometry g = st.geometry.value_or(ImageGeometry{0, 0, 0});
    e.emplace_back("config/geometry", Tensor({3}, {double(g.height), double(g.width), double(g.channels)}));
    e.emplace_back("config/n_frames", scalar(double(st.n_frames)));
    for (const auto& [name, t] : st.params) e.emplace_back("param/" + name, t);
    for (std::size_t p = 0; p < st.params.size(); ++p) e.emplace_back("adam_m/" + st.params[p].first, st.adam_m[p]);
    for (std::size_t p = 0; p < st.params.size(); ++p) e.emplace_back("adam_v/" + st.params[p].first, st.adam_v[p]);
    e.emplace_back("state/step", scalar(double(st.step)));
    e.emplace_back("state/initial_loss", scalar(st.initial_loss));
    e.emplace_back("state/over_count", scalar(double(st.over_count)));
    e.emplace_back("rng/batch", pack_rng(st.batch_rng));
    e.emplace_back("rng/loss", pack_rng(st.loss_rng));
    write_tensors(e, path);
}

TrainState load_checkpoint(const std::filesystem::path& path)
{
    const NamedTensors e = read_tensors(path);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < e.size(); ++i) index[e[i].first] = i;

    TrainState st;
    const Tensor& mc = entry(e, index, "config/model");
    if (mc.size() != 9) throw CheckpointError("config/model must have 9 values");
    st.model.frame_dim = static_cast<std::size_t>(mc[0]);
    st.model.embed_dim = static_cast<std::size_t>(mc[1]);
    st.model.n_layers = static_cast<std::size_t>(mc[2]);
    st.model.n_heads = static_cast<std::size_t>(mc[3]);
    st.model.mlp_ratio = static_cast<std::size_t>(mc[4]);
    st.model.patch_size = static_cast<std::size_t>(mc[5]);
    st.model.image_height = static_cast<std::size_t>(mc[6]);
    st.model.image_width = static_cast<std::size_t>(mc[7]);
    st.model.v_prediction = mc[8] != 0.0;
    st.model.preset = "custom";
    for (const char* name : {"toy-S", "toy-B"}) {
        const auto p = DenoiserConfig::from_preset(name, st.model.frame_dim);
        if (p.embed_dim == st.model.embed_dim && p.n_layers == st.model.n_layers && p.n_heads == st.model.n_heads &&
            p.mlp_ratio == st.model.mlp_ratio) {
            st.model.preset = name;
        }
    }
    try {
        st.model.validate();
    } catch (const ModelError& err) {
        throw CheckpointError(std::string("invalid model configuration: ") + err.what());
    }
    const Tensor& sc = entry(e, index, "config/schedule");
    if (sc.size() != 4) throw CheckpointError("config/schedule must have 4 values");
    st.schedule = NoiseSchedule{sc[0], sc[1], sc[2], sc[3]};
    st.model.schedule = st.schedule;
    const Tensor& gc = entry(e, index, "config/geometry");
    if (gc.size() != 3) throw CheckpointError("config/geometry must have 3 values");
    if (gc[0] > 0) {
        st.geometry = ImageGeometry{static_cast<std::size_t>(gc[0]), static_cast<std::size_t>(gc[1]),
                                    static_cast<std::size_t>(gc[2])};
    }
    st.n_frames = static_cast<std::size_t>(scalar_of(e, index, "config/n_frames", 1));

    RngStream none;
    const ParamSet shapes = init_denoiser(st.model, none);
    for (const auto& [name, t] : shapes) {
        const Tensor& p = entry(e, index, "param/" + name);
        const Tensor& mm = entry(e, index, "adam_m/" + name);
        const Tensor& vv = entry(e, index, "adam_v/" + name);
        if (p.shape() != t.shape() || mm.shape() != t.shape() || vv.shape() != t.shape()) {
            throw CheckpointError("checkpoint tensor '" + name + "' has shape " + shape_string(p.shape()) +
                                  ", expected " + shape_string(t.shape()));
        }
        st.params.emplace_back(name, p);
        st.adam_m.push_back(mm);
        st.adam_v.push_back(vv);
    }
    st.step = static_cast<std::uint64_t>(scalar_of(e, index, "state/step", 1));
    st.initial_loss = scalar_of(e, index, "state/initial_loss", 1);
    st.over_count = static_cast<std::uint64_t>(scalar_of(e, index, "state/over_count", 1));
    st.batch_rng = unpack_rng(entry(e, index, "rng/batch"));
    st.loss_rng = unpack_rng(entry(e, index, "rng/loss"));
    return st;
}

}  // namespace fvdm
