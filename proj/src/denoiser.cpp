#include "fvdm/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace fvdm {

namespace {

enum class Init { fan_in, zero };

struct ParamSpec {
    std::string name;
    Shape shape;
    Init init;
};

void add_linear(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t in, std::size_t outd, Init init)
{
    out.push_back({prefix + ".w", {in, outd}, init});
    out.push_back({prefix + ".b", {outd}, Init::zero});
}

// Order here is the contract between init_denoiser and denoiser_forward.
std::vector<ParamSpec> param_specs(const DenoiserConfig& cfg)
{
    const std::size_t d = cfg.token_dim(), D = cfg.embed_dim, M = cfg.mlp_ratio * cfg.embed_dim;
    std::vector<ParamSpec> specs;
    add_linear(specs, "embed", d, D, Init::fan_in);
    add_linear(specs, "time.fc1", D, D, Init::fan_in);
    add_linear(specs, "time.fc2", D, D, Init::fan_in);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "block" + std::to_string(l);
        add_linear(specs, p + ".ada", D, 6 * D, Init::zero);
        add_linear(specs, p + ".q", D, D, Init::fan_in);
        add_linear(specs, p + ".k", D, D, Init::fan_in);
        add_linear(specs, p + ".v", D, D, Init::fan_in);
        add_linear(specs, p + ".o", D, D, Init::fan_in);
        add_linear(specs, p + ".fc1", D, M, Init::fan_in);
        add_linear(specs, p + ".fc2", M, D, Init::fan_in);
    }
    add_linear(specs, "final.ada", D, 2 * D, Init::zero);
    add_linear(specs, "final.out", D, d, Init::zero);
    return specs;
}

// Linear layers are consumed as (w, b) pairs in spec order.
class Cursor {
public:
    explicit Cursor(std::span<const ad::Var> params) : params_(params) {}

    ad::Var linear(ad::Var x)
    {
        const ad::Var w = params_[pos_++];
        const ad::Var b = params_[pos_++];
        return ad::linear(x, w, b);
    }
    void skip(std::size_t n_linear) { pos_ += 2 * n_linear; }
    std::size_t position() const { return pos_; }

private:
    std::span<const ad::Var> params_;
    std::size_t pos_ = 0;
};

// LN(h) * (1 + scale) + shift, rowwise.
ad::Var modulate(ad::Var h, ad::Var shift, ad::Var scale)
{
    const ad::Var n = ad::layer_norm(h);
    return n + n * scale + shift;
}

constexpr std::size_t kLinearsPerBlock = 7;
constexpr double kMasked = -1e30;

// out[k] = x[index[k]]; the adjoint scatters back with accumulation.
ad::Var gather(ad::Var x, Shape shape, std::shared_ptr<const std::vector<std::size_t>> index)
{
    const Tensor& xv = x.value();
    Tensor out(std::move(shape));
    for (std::size_t k = 0; k < index->size(); ++k) out[k] = xv[(*index)[k]];
    const Shape in_shape = xv.shape();
    const ad::NodeId parent = x.id;
    return x.tape->custom(std::move(out), std::vector<ad::NodeId>{parent}, [parent, in_shape, index](ad::Tape& tape, const Tensor& g) {
        Tensor gx(in_shape);
        for (std::size_t k = 0; k < index->size(); ++k) gx[(*index)[k]] += g[k];
        tape.accumulate(parent, gx);
    });
}

// Token t = i * P + p holds patch p of frame i, pixels row-major within the patch.
struct Tokenizer {
    std::size_t n = 0, P = 1, pd = 0, D = 0;
    std::shared_ptr<const std::vector<std::size_t>> patchify;    // (N P) x pd <- N x d
    std::shared_ptr<const std::vector<std::size_t>> unpatchify;  // N x d <- (N P) x pd
    std::shared_ptr<const std::vector<std::size_t>> expand6;     // (N P) x 6D <- N x 6D
    std::shared_ptr<const std::vector<std::size_t>> expand2;     // (N P) x 2D <- N x 2D
    Tensor spatial_mask, temporal_mask;

    Tokenizer(const DenoiserConfig& cfg, std::size_t frames) : n(frames), P(cfg.tokens_per_frame()), D(cfg.embed_dim)
    {
        pd = cfg.token_dim();
        if (P == 1) return;
        const std::size_t ps = cfg.patch_size, w = cfg.image_width, per_row = w / ps, d = cfg.frame_dim;
        std::vector<std::size_t> fwd(n * P * pd), inv(n * d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t r0 = (p / per_row) * ps, c0 = (p % per_row) * ps;
                for (std::size_t a = 0; a < ps; ++a) {
                    for (std::size_t b = 0; b < ps; ++b) {
                        const std::size_t src = i * d + (r0 + a) * w + c0 + b;
                        const std::size_t dst = (i * P + p) * pd + a * ps + b;
                        fwd[dst] = src;
                        inv[src] = dst;
                    }
                }
            }
        }
        patchify = std::make_shared<const std::vector<std::size_t>>(std::move(fwd));
        unpatchify = std::make_shared<const std::vector<std::size_t>>(std::move(inv));
        expand6 = row_repeat(6 * D);
        expand2 = row_repeat(2 * D);
        spatial_mask = Tensor({n * P, n * P}, kMasked);
        temporal_mask = Tensor({n * P, n * P}, kMasked);
        for (std::size_t s = 0; s < n * P; ++s) {
            for (std::size_t t = 0; t < n * P; ++t) {
                if (s / P == t / P) spatial_mask.at(s, t) = 0.0;
                if (s % P == t % P) temporal_mask.at(s, t) = 0.0;
            }
        }
    }

    std::shared_ptr<const std::vector<std::size_t>> row_repeat(std::size_t width) const
    {
        std::vector<std::size_t> idx(n * P * width);
        for (std::size_t t = 0; t < n * P; ++t) {
            for (std::size_t j = 0; j < width; ++j) idx[t * width + j] = (t / P) * width + j;
        }
        return std::make_shared<const std::vector<std::size_t>>(std::move(idx));
    }
};

// Fixed 2-D sine-cosine table for patch positions: the first half of each row
// encodes the patch row, the second half the patch column.
Tensor patch_positions(const DenoiserConfig& cfg)
{
    const std::size_t D = cfg.embed_dim, half = D / 2, per_row = cfg.image_width / cfg.patch_size;
    const std::size_t P = cfg.tokens_per_frame();
    Tensor out({P, D});
    for (std::size_t p = 0; p < P; ++p) {
        const double coord[2] = {static_cast<double>(p / per_row), static_cast<double>(p % per_row)};
        for (std::size_t axis = 0; axis < 2; ++axis) {
            for (std::size_t k = 0; k < half / 2; ++k) {
                const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(half));
                out.at(p, axis * half + 2 * k) = std::sin(coord[axis] * omega);
                out.at(p, axis * half + 2 * k + 1) = std::cos(coord[axis] * omega);
            }
        }
    }
    return out;
}

}  // namespace

DenoiserConfig DenoiserConfig::from_preset(const std::string& name, std::size_t frame_dim)
{
    DenoiserConfig c;
    c.frame_dim = frame_dim;
    c.preset = name;
    if (name == "toy-S") {
        c.embed_dim = 32;
        c.n_layers = 2;
        c.n_heads = 2;
    } else if (name == "toy-B") {
        c.embed_dim = 64;
        c.n_layers = 4;
        c.n_heads = 4;
    } else {
        throw ModelError("unknown model preset '" + name + "' (expected toy-S or toy-B)");
    }
    return c;
}

DenoiserConfig DenoiserConfig::from_preset(const std::string& name, const ImageGeometry& geometry, std::size_t patch)
{
    DenoiserConfig c = from_preset(name, geometry.pixels());
    if (geometry.channels != 1) throw ModelError("patch tokens need single-channel images");
    c.patch_size = patch;
    c.image_height = geometry.height;
    c.image_width = geometry.width;
    c.validate();
    return c;
}

std::size_t DenoiserConfig::tokens_per_frame() const
{
    return patch_size == 0 ? 1 : (image_height / patch_size) * (image_width / patch_size);
}

std::size_t DenoiserConfig::token_dim() const
{
    return patch_size == 0 ? frame_dim : patch_size * patch_size;
}

void DenoiserConfig::validate() const
{
    if (frame_dim < 1) throw ModelError("frame_dim must be positive");
    if (embed_dim < 2 || embed_dim % 2 != 0) throw ModelError("embed_dim must be even and positive");
    if (n_heads < 1 || embed_dim % n_heads != 0) {
        throw ModelError("embed_dim " + std::to_string(embed_dim) + " is not divisible by n_heads " +
                         std::to_string(n_heads));
    }
    if (mlp_ratio < 1) throw ModelError("mlp_ratio must be positive");
    if (patch_size > 0) {
        if (image_height * image_width != frame_dim) throw ModelError("image height x width must equal frame_dim");
        if (image_height % patch_size != 0 || image_width % patch_size != 0) {
            throw ModelError("patch_size " + std::to_string(patch_size) + " does not tile a " +
                             std::to_string(image_height) + " x " + std::to_string(image_width) + " image");
        }
        if (embed_dim % 4 != 0) throw ModelError("patch tokens need embed_dim divisible by 4");
    }
    if (v_prediction) schedule.validate();
}

Tensor embed_timesteps(const Vtv& tau, std::size_t dim)
{
    if (dim == 0 || dim % 2 != 0) throw ModelError("timestep embedding dimension must be even, got " + std::to_string(dim));
    if (tau.size() == 0) throw ModelError("timestep embedding needs at least one frame");
    Tensor out({tau.size(), dim});
    for (std::size_t i = 0; i < tau.size(); ++i) {
        const double t = 1000.0 * tau[i];
        auto row = out.row(i);
        for (std::size_t k = 0; k < dim / 2; ++k) {
            const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
            row[2 * k] = std::sin(t * omega);
            row[2 * k + 1] = std::cos(t * omega);
        }
    }
    return out;
}

ParamSet init_denoiser(const DenoiserConfig& cfg, RngStream& rng)
{
    cfg.validate();
    ParamSet params;
    for (const auto& spec : param_specs(cfg)) {
        Tensor t(spec.shape);
        if (spec.init == Init::fan_in && spec.shape.size() == 2) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.shape[0]));
            for (double& v : t.data()) v = bound * (2.0 * rng.uniform() - 1.0);
        }
        params.emplace_back(spec.name, std::move(t));
    }
    return params;
}

std::size_t parameter_count(const ParamSet& params)
{
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

std::vector<ad::Var> register_parameters(ad::Tape& tape, const ParamSet& params)
{
    std::vector<ad::Var> vars;
    vars.reserve(params.size());
    for (const auto& [name, t] : params) vars.push_back(tape.parameter(t, name));
    return vars;
}

ad::Var denoiser_forward(const DenoiserConfig& cfg, std::span<const ad::Var> params, ad::Var x, const Vtv& tau,
                         const ForwardOptions& opts)
{
    cfg.validate();
    const auto specs = param_specs(cfg);
    if (params.size() != specs.size()) {
        throw ModelError("expected " + std::to_string(specs.size()) + " parameter tensors, got " +
                         std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (params[i].shape() != specs[i].shape) {
            throw ModelError("parameter " + specs[i].name + " has shape " + shape_string(params[i].shape()) +
                             ", expected " + shape_string(specs[i].shape));
        }
    }
    const Shape& xs = x.shape();
    if (xs.size() != 2 || xs[1] != cfg.frame_dim) {
        throw ModelError("input must be N x " + std::to_string(cfg.frame_dim) + ", got " + shape_string(xs));
    }
    const std::size_t n = xs[0], D = cfg.embed_dim, dh = D / cfg.n_heads;
    if (tau.size() != n) {
        throw ModelError("vtv length " + std::to_string(tau.size()) + " does not match frame count " +
                         std::to_string(n));
    }
    ad::Tape& tape = *x.tape;
    const Tokenizer tok(cfg, n);
    const bool patched = tok.P > 1;
    const std::size_t T = n * tok.P;

    Cursor cur(params);
    ad::Var h = cur.linear(patched ? gather(x, {T, tok.pd}, tok.patchify) : x);
    if (patched) {
        const Tensor pos = patch_positions(cfg);
        Tensor all({T, D});
        for (std::size_t t = 0; t < T; ++t) std::ranges::copy(pos.row(t % tok.P), all.row(t).begin());
        h = h + tape.constant(std::move(all));
    }
    const ad::Var temb = tape.constant(embed_timesteps(tau, D));
    const ad::Var c = cur.linear(ad::silu(cur.linear(temb)));
    const ad::Var cond = ad::silu(c);

    if (opts.skip_blocks) {
        cur.skip(kLinearsPerBlock * cfg.n_layers);
    } else {
        const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            const ad::Var mod = patched ? gather(cur.linear(cond), {T, 6 * D}, tok.expand6) : cur.linear(cond);
            const Tensor* mask = !patched ? nullptr : (l % 2 == 0 ? &tok.spatial_mask : &tok.temporal_mask);
            auto chunk = [&](std::size_t j) { return ad::slice(mod, 1, j * D, (j + 1) * D); };

            const ad::Var a = modulate(h, chunk(0), chunk(1));
            const ad::Var q = cur.linear(a);
            const ad::Var k = cur.linear(a);
            const ad::Var v = cur.linear(a);
            std::vector<ad::Var> heads;
            for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
                const ad::Var qh = ad::slice(q, 1, hd * dh, (hd + 1) * dh);
                const ad::Var kh = ad::slice(k, 1, hd * dh, (hd + 1) * dh);
                const ad::Var vh = ad::slice(v, 1, hd * dh, (hd + 1) * dh);
                ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), attn_scale);
                if (mask) scores = scores + tape.constant(*mask);
                const ad::Var att = ad::softmax(scores, 1);
                heads.push_back(ad::matmul(att, vh));
            }
            const ad::Var attn = cur.linear(heads.size() == 1 ? heads.front() : ad::concat(heads, 1));
            const ad::Var r1 = chunk(2) * attn;
            h = h + r1;

            const ad::Var m = modulate(h, chunk(3), chunk(4));
            const ad::Var mlp = cur.linear(ad::silu(cur.linear(m)));
            const ad::Var r2 = chunk(5) * mlp;
            h = h + r2;

            if (opts.residuals) {
                opts.residuals->push_back(r1.value());
                opts.residuals->push_back(r2.value());
            }
        }
    }

    const ad::Var fmod = patched ? gather(cur.linear(cond), {T, 2 * D}, tok.expand2) : cur.linear(cond);
    const ad::Var y = modulate(h, ad::slice(fmod, 1, 0, D), ad::slice(fmod, 1, D, 2 * D));
    const ad::Var lin = cur.linear(y);
    const ad::Var out = patched ? gather(lin, {n, cfg.frame_dim}, tok.unpatchify) : lin;
    if (!cfg.v_prediction) return out;
    Tensor skip({n, cfg.frame_dim}), gain({n, cfg.frame_dim});
    for (std::size_t i = 0; i < n; ++i) {
        const auto mc = marginal_coeffs(cfg.schedule, tau[i]);
        for (double& v : skip.row(i)) v = mc.std;
        for (double& v : gain.row(i)) v = mc.mean_coef;
    }
    return x * tape.constant(std::move(skip)) + out * tape.constant(std::move(gain));
}

Tensor denoiser_forward(const DenoiserConfig& cfg, const ParamSet& params, const Tensor& x, const Vtv& tau,
                        const ForwardOptions& opts)
{
    ad::Tape tape;
    const auto vars = register_parameters(tape, params);
    const ad::Var xv = tape.constant(x);
    return denoiser_forward(cfg, vars, xv, tau, opts).value();
}

DenoiserScore::DenoiserScore(DenoiserConfig cfg, ParamSet params, std::optional<ImageGeometry> geometry)
    : cfg_(std::move(cfg)), params_(std::move(params)), geometry_(geometry)
{
    cfg_.validate();
    const auto specs = param_specs(cfg_);
    if (params_.size() != specs.size()) throw ModelError("parameter set does not match the model configuration");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (params_[i].second.shape() != specs[i].shape) {
            throw ModelError("parameter " + params_[i].first + " has shape " +
                             shape_string(params_[i].second.shape()) + ", expected " + shape_string(specs[i].shape));
        }
    }
    if (geometry_ && geometry_->pixels() != cfg_.frame_dim) {
        throw ModelError("image geometry does not match frame_dim");
    }
}

VideoTensor DenoiserScore::evaluate(const VideoTensor& x, const Vtv& tau) const
{
    VideoTensor out(denoiser_forward(cfg_, params_, x.tensor(), tau), x.geometry());
    return out;
}

}  // namespace fvdm
