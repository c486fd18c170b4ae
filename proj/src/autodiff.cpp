#include "fvdm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fvdm::ad {

namespace {

struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis)
{
    if (axis >= shape.size()) {
        throw AutodiffError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// Input strides aligned to `out`, zero along broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out)
{
    if (in.size() > out.size()) {
        throw AutodiffError("cannot broadcast " + shape_string(in) + " to " + shape_string(out));
    }
    const std::size_t lead = out.size() - in.size();
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t k = in.size(); k-- > 0;) {
        const std::size_t o = k + lead;
        if (in[k] == out[o]) {
            strides[o] = in[k] == 1 ? 0 : stride;
        } else if (in[k] != 1) {
            throw AutodiffError("cannot broadcast " + shape_string(in) + " to " + shape_string(out));
        }
        stride *= in[k];
    }
    return strides;
}

template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& strides, Fn&& fn)
{
    const std::size_t r = out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t in_flat = 0;
    const std::size_t total = shape_size(out);
    for (std::size_t o = 0; o < total; ++o) {
        fn(o, in_flat);
        for (std::size_t k = r; k-- > 0;) {
            ++idx[k];
            in_flat += strides[k];
            if (idx[k] < out[k]) break;
            in_flat -= strides[k] * idx[k];
            idx[k] = 0;
        }
    }
}

void require_same(const Tensor& a, const Tensor& b, OpKind kind)
{
    if (a.shape() != b.shape()) {
        throw AutodiffError(std::string(op_name(kind)) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
    }
}

Tensor reduce_sum(const Tensor& x, std::size_t axis)
{
    if (axis == kAllAxes) {
        double s = 0.0;
        for (double v : x.data()) s += v;
        return Tensor({1}, std::vector<double>{s});
    }
    const auto sp = split_at(x.shape(), axis);
    Shape shape = x.shape();
    shape[axis] = 1;
    Tensor out(shape);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t l = 0; l < sp.len; ++l) {
            const double* src = x.data().data() + (o * sp.len + l) * sp.inner;
            double* dst = out.data().data() + o * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
    }
    return out;
}

// Expands a reduced gradient back to the input shape.
Tensor expand_reduced(const Tensor& g, const Shape& shape, std::size_t axis)
{
    Tensor out(shape);
    if (axis == kAllAxes) {
        std::fill(out.data().begin(), out.data().end(), g[0]);
        return out;
    }
    const auto sp = split_at(shape, axis);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t l = 0; l < sp.len; ++l) {
            std::memcpy(out.data().data() + (o * sp.len + l) * sp.inner, g.data().data() + o * sp.inner,
                        sp.inner * sizeof(double));
        }
    }
    return out;
}

std::size_t reduced_count(const Shape& shape, std::size_t axis)
{
    return axis == kAllAxes ? shape_size(shape) : shape.at(axis);
}

Tensor softmax_forward(const Tensor& x, std::size_t axis)
{
    const auto sp = split_at(x.shape(), axis);
    Tensor y(x.shape());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.len * sp.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, x[base + l * sp.inner]);
            double z = 0.0;
            for (std::size_t l = 0; l < sp.len; ++l) {
                const double e = std::exp(x[base + l * sp.inner] - mx);
                y[base + l * sp.inner] = e;
                z += e;
            }
            for (std::size_t l = 0; l < sp.len; ++l) y[base + l * sp.inner] /= z;
        }
    }
    return y;
}

Tensor layer_norm_forward(const Tensor& x)
{
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    Tensor y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = x.data().data() + r * n;
        double* dst = y.data().data() + r * n;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += src[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t i = 0; i < n; ++i) dst[i] = (src[i] - mu) * inv;
    }
    return y;
}

double sigmoid(double x)
{
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

const char* op_name(OpKind kind)
{
    switch (kind) {
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::broadcast: return "broadcast";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::softmax: return "softmax";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::tanh: return "tanh";
    case OpKind::silu: return "silu";
    case OpKind::slice: return "slice";
    case OpKind::concat: return "concat";
    case OpKind::scale: return "scale";
    case OpKind::shift: return "shift";
    case OpKind::custom: return "custom";
    }
    return "unknown";
}

const Tensor& Var::value() const
{
    return tape->value(id);
}

Var Tape::push(Node node)
{
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor value, std::string name)
{
    if (nodes_.size() != params_.size()) {
        throw AutodiffError("parameters must be registered before any other node");
    }
    Node n;
    n.kind = OpKind::parameter;
    n.value = std::move(value);
    n.requires_grad = true;
    n.name = std::move(name);
    auto v = push(std::move(n));
    params_.push_back(v.id);
    return v;
}

Var Tape::constant(Tensor value)
{
    Node n;
    n.kind = OpKind::constant;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::custom(Tensor value, std::vector<NodeId> parents, BackwardFn backward)
{
    Node n;
    n.kind = OpKind::custom;
    n.value = std::move(value);
    for (auto p : parents) {
        if (p >= nodes_.size()) throw AutodiffError("custom: unknown parent node");
        n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
    }
    n.parents = std::move(parents);
    n.custom_backward = std::move(backward);
    return push(std::move(n));
}

Var Tape::record(OpKind kind, std::span<const NodeId> inputs, const OpAttrs& attrs)
{
    for (auto id : inputs) {
        if (id >= nodes_.size()) {
            throw AutodiffError(std::string(op_name(kind)) + ": input node " + std::to_string(id) + " not on tape");
        }
    }
    auto arity = [&](std::size_t n) {
        if (inputs.size() != n) {
            throw AutodiffError(std::string(op_name(kind)) + " expects " + std::to_string(n) + " inputs, got " +
                                std::to_string(inputs.size()));
        }
    };
    auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i]].value; };

    Node n;
    n.kind = kind;
    n.attrs = attrs;
    n.parents.assign(inputs.begin(), inputs.end());

    switch (kind) {
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
        arity(2);
        require_same(in(0), in(1), kind);
        n.value = kind == OpKind::add ? in(0) + in(1) : kind == OpKind::sub ? in(0) - in(1) : hadamard(in(0), in(1));
        break;
    }
    case OpKind::matmul: {
        arity(2);
        if (in(0).rank() != 2 || in(1).rank() != 2 || in(0).cols() != in(1).rows()) {
            throw AutodiffError("matmul: shape mismatch " + shape_string(in(0).shape()) + " x " +
                                shape_string(in(1).shape()));
        }
        n.value = fvdm::matmul(in(0), in(1));
        break;
    }
    case OpKind::transpose:
        arity(1);
        if (in(0).rank() != 2) throw AutodiffError("transpose expects a matrix");
        n.value = fvdm::transpose(in(0));
        break;
    case OpKind::broadcast: {
        arity(1);
        const auto strides = broadcast_strides(in(0).shape(), attrs.shape);
        n.value = Tensor(attrs.shape);
        const Tensor& src = in(0);
        for_each_broadcast(attrs.shape, strides, [&](std::size_t o, std::size_t i) { n.value[o] = src[i]; });
        break;
    }
    case OpKind::sum:
    case OpKind::mean: {
        arity(1);
        n.value = reduce_sum(in(0), attrs.axis);
        if (kind == OpKind::mean) {
            const double c = 1.0 / static_cast<double>(reduced_count(in(0).shape(), attrs.axis));
            for (double& v : n.value.data()) v *= c;
        }
        break;
    }
    case OpKind::softmax:
        arity(1);
        n.value = softmax_forward(in(0), attrs.axis);
        break;
    case OpKind::layer_norm:
        arity(1);
        n.value = layer_norm_forward(in(0));
        break;
    case OpKind::tanh:
        arity(1);
        n.value = in(0);
        for (double& v : n.value.data()) v = std::tanh(v);
        break;
    case OpKind::silu:
        arity(1);
        n.value = in(0);
        for (double& v : n.value.data()) v = v * sigmoid(v);
        break;
    case OpKind::slice: {
        arity(1);
        const auto sp = split_at(in(0).shape(), attrs.axis);
        if (attrs.begin >= attrs.end || attrs.end > sp.len) {
            throw AutodiffError("slice: range [" + std::to_string(attrs.begin) + ", " + std::to_string(attrs.end) +
                                ") invalid for extent " + std::to_string(sp.len));
        }
        Shape shape = in(0).shape();
        shape[attrs.axis] = attrs.end - attrs.begin;
        n.value = Tensor(shape);
        const std::size_t chunk = (attrs.end - attrs.begin) * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            std::memcpy(n.value.data().data() + o * chunk,
                        in(0).data().data() + (o * sp.len + attrs.begin) * sp.inner, chunk * sizeof(double));
        }
        break;
    }
    case OpKind::concat: {
        if (inputs.empty()) throw AutodiffError("concat needs at least one input");
        Shape shape = in(0).shape();
        const auto sp0 = split_at(shape, attrs.axis);
        std::size_t total = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            Shape s = in(k).shape();
            if (s.size() != shape.size()) throw AutodiffError("concat: rank mismatch");
            total += s[attrs.axis];
            s[attrs.axis] = shape[attrs.axis];
            if (s != shape) throw AutodiffError("concat: shape mismatch off the concatenation axis");
        }
        shape[attrs.axis] = total;
        n.value = Tensor(shape);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            const std::size_t len = in(k).shape()[attrs.axis];
            for (std::size_t o = 0; o < sp0.outer; ++o) {
                std::memcpy(n.value.data().data() + (o * total + offset) * sp0.inner,
                            in(k).data().data() + o * len * sp0.inner, len * sp0.inner * sizeof(double));
            }
            offset += len;
        }
        break;
    }
    case OpKind::scale:
        arity(1);
        n.value = attrs.scalar * in(0);
        break;
    case OpKind::shift:
        arity(1);
        n.value = in(0);
        for (double& v : n.value.data()) v += attrs.scalar;
        break;
    case OpKind::parameter:
    case OpKind::constant:
    case OpKind::custom:
        throw AutodiffError(std::string("record: ") + op_name(kind) + " is not a recordable operation");
    default:
        throw AutodiffError("record: unknown op kind " + std::to_string(static_cast<int>(kind)));
    }

    for (auto id : inputs) {
        n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    }
    return push(std::move(n));
}

Tensor& Tape::parameter_value(NodeId id)
{
    auto& n = nodes_.at(id);
    if (n.kind != OpKind::parameter) {
        throw AutodiffError("parameter_value: node " + std::to_string(id) + " is not a parameter");
    }
    return n.value;
}

Tensor Tape::grad(NodeId id) const
{
    const auto& n = nodes_.at(id);
    return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

void Tape::accumulate(NodeId id, const Tensor& g)
{
    auto& n = nodes_.at(id);
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape()) {
        throw AutodiffError("gradient shape " + shape_string(g.shape()) + " does not match value shape " +
                            shape_string(n.value.shape()) + " at node " + std::to_string(id));
    }
    if (n.grad.empty()) {
        n.grad = g;
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
}

void Tape::zero_grad()
{
    for (auto& n : nodes_) n.grad = Tensor();
}

void Tape::clear()
{
    nodes_.resize(params_.size());
    zero_grad();
}

void Tape::backward(Var loss)
{
    if (loss.tape != this || loss.id >= nodes_.size()) {
        throw AutodiffError("backward: loss node is not on this tape");
    }
    if (nodes_[loss.id].value.size() != 1) {
        throw AutodiffError("backward: loss must be scalar, got shape " + shape_string(nodes_[loss.id].value.shape()));
    }
    for (std::size_t i = params_.size(); i < nodes_.size(); ++i) nodes_[i].grad = Tensor();
    if (!nodes_[loss.id].requires_grad) return;
    accumulate(loss.id, Tensor(nodes_[loss.id].value.shape(), 1.0));
    for (std::size_t id = loss.id + 1; id-- > params_.size();) {
        if (!nodes_[id].grad.empty()) propagate(id);
    }
}

void Tape::propagate(NodeId id)
{
    // accumulate() never appends nodes, so `n` and `g` stay valid throughout.
    const Node& n = nodes_[id];
    const Tensor& g = n.grad;
    auto pv = [&](std::size_t i) -> const Tensor& { return nodes_[n.parents[i]].value; };
    auto wants = [&](std::size_t i) { return nodes_[n.parents[i]].requires_grad; };

    switch (n.kind) {
    case OpKind::add:
        accumulate(n.parents[0], g);
        accumulate(n.parents[1], g);
        break;
    case OpKind::sub:
        accumulate(n.parents[0], g);
        if (wants(1)) accumulate(n.parents[1], -1.0 * g);
        break;
    case OpKind::mul:
        if (wants(0)) accumulate(n.parents[0], hadamard(g, pv(1)));
        if (wants(1)) accumulate(n.parents[1], hadamard(g, pv(0)));
        break;
    case OpKind::matmul:
        if (wants(0)) accumulate(n.parents[0], fvdm::matmul(g, fvdm::transpose(pv(1))));
        if (wants(1)) accumulate(n.parents[1], fvdm::matmul(fvdm::transpose(pv(0)), g));
        break;
    case OpKind::transpose:
        accumulate(n.parents[0], fvdm::transpose(g));
        break;
    case OpKind::broadcast: {
        const Shape& in_shape = pv(0).shape();
        const auto strides = broadcast_strides(in_shape, n.attrs.shape);
        Tensor acc(in_shape);
        for_each_broadcast(n.attrs.shape, strides, [&](std::size_t o, std::size_t i) { acc[i] += g[o]; });
        accumulate(n.parents[0], acc);
        break;
    }
    case OpKind::sum:
    case OpKind::mean: {
        Tensor e = expand_reduced(g, pv(0).shape(), n.attrs.axis);
        if (n.kind == OpKind::mean) {
            e = (1.0 / static_cast<double>(reduced_count(pv(0).shape(), n.attrs.axis))) * e;
        }
        accumulate(n.parents[0], e);
        break;
    }
    case OpKind::softmax: {
        const Tensor& y = n.value;
        const auto sp = split_at(y.shape(), n.attrs.axis);
        Tensor dx(y.shape());
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.len * sp.inner + i;
                double dot = 0.0;
                for (std::size_t l = 0; l < sp.len; ++l) dot += g[base + l * sp.inner] * y[base + l * sp.inner];
                for (std::size_t l = 0; l < sp.len; ++l) {
                    const std::size_t k = base + l * sp.inner;
                    dx[k] = y[k] * (g[k] - dot);
                }
            }
        }
        accumulate(n.parents[0], dx);
        break;
    }
    case OpKind::layer_norm: {
        const Tensor& x = pv(0);
        const Tensor& y = n.value;
        const std::size_t len = x.shape().back();
        const std::size_t rows = x.size() / len;
        Tensor dx(x.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xs = x.data().data() + r * len;
            double mu = 0.0;
            for (std::size_t i = 0; i < len; ++i) mu += xs[i];
            mu /= static_cast<double>(len);
            double var = 0.0;
            for (std::size_t i = 0; i < len; ++i) var += (xs[i] - mu) * (xs[i] - mu);
            var /= static_cast<double>(len);
            const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            double gm = 0.0, gym = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                gm += g[r * len + i];
                gym += g[r * len + i] * y[r * len + i];
            }
            gm /= static_cast<double>(len);
            gym /= static_cast<double>(len);
            for (std::size_t i = 0; i < len; ++i) {
                dx[r * len + i] = inv * (g[r * len + i] - gm - y[r * len + i] * gym);
            }
        }
        accumulate(n.parents[0], dx);
        break;
    }
    case OpKind::tanh: {
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - n.value[i] * n.value[i];
        accumulate(n.parents[0], dx);
        break;
    }
    case OpKind::silu: {
        const Tensor& x = pv(0);
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i) {
            const double s = sigmoid(x[i]);
            dx[i] *= s * (1.0 + x[i] * (1.0 - s));
        }
        accumulate(n.parents[0], dx);
        break;
    }
    case OpKind::slice: {
        const auto sp = split_at(pv(0).shape(), n.attrs.axis);
        Tensor dx(pv(0).shape());
        const std::size_t chunk = (n.attrs.end - n.attrs.begin) * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            std::memcpy(dx.data().data() + (o * sp.len + n.attrs.begin) * sp.inner, g.data().data() + o * chunk,
                        chunk * sizeof(double));
        }
        accumulate(n.parents[0], dx);
        break;
    }
    case OpKind::concat: {
        const auto sp = split_at(n.value.shape(), n.attrs.axis);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            const Tensor& part = pv(k);
            const std::size_t len = part.shape()[n.attrs.axis];
            if (wants(k)) {
                Tensor dx(part.shape());
                for (std::size_t o = 0; o < sp.outer; ++o) {
                    std::memcpy(dx.data().data() + o * len * sp.inner,
                                g.data().data() + (o * sp.len + offset) * sp.inner, len * sp.inner * sizeof(double));
                }
                accumulate(n.parents[k], dx);
            }
            offset += len;
        }
        break;
    }
    case OpKind::scale:
        accumulate(n.parents[0], n.attrs.scalar * g);
        break;
    case OpKind::shift:
        accumulate(n.parents[0], g);
        break;
    case OpKind::custom: {
        const Tensor grad_out = g;
        n.custom_backward(*this, grad_out);
        break;
    }
    case OpKind::parameter:
    case OpKind::constant:
        break;
    }
}

Var add(Var a, Var b)
{
    const NodeId ids[] = {a.id, b.id};
    return a.tape->record(OpKind::add, ids);
}

Var sub(Var a, Var b)
{
    const NodeId ids[] = {a.id, b.id};
    return a.tape->record(OpKind::sub, ids);
}

Var mul(Var a, Var b)
{
    const NodeId ids[] = {a.id, b.id};
    return a.tape->record(OpKind::mul, ids);
}

Var matmul(Var a, Var b)
{
    const NodeId ids[] = {a.id, b.id};
    return a.tape->record(OpKind::matmul, ids);
}

Var transpose(Var a)
{
    const NodeId ids[] = {a.id};
    return a.tape->record(OpKind::transpose, ids);
}

Var broadcast_to(Var a, Shape shape)
{
    const NodeId ids[] = {a.id};
    OpAttrs attrs;
    attrs.shape = std::move(shape);
    return a.tape->record(OpKind::broadcast, ids, attrs);
}

Var sum(Var a, std::size_t axis)
{
    const NodeId ids[] = {a.id};
    OpAttrs attrs;
    attrs.axis = axis;
    return a.tape->record(OpKind::sum, ids, attrs);
}

Var mean(Var a, std::size_t axis)
{
    const NodeId ids[] = {a.id};
    OpAttrs attrs;
    attrs.axis = axis;
    return a.tape->record(OpKind::mean, ids, attrs);
}

Var softmax(Var a, std::size_t axis)
{
    const NodeId ids[] = {a.id};
    OpAttrs attrs;
    attrs.axis = axis;
    return a.tape->record(OpKind::softmax, ids, attrs);
}

Var layer_norm(Var a)
{
    const NodeId ids[] = {a.id};
    return a.tape->record(OpKind::layer_norm, ids);
}

Var tanh(Var a)
{
    const NodeId ids[] = {a.id};
    return a.tape->record(OpKind::tanh, ids);
}

Var silu(Var a)
{
    const NodeId ids[] = {a.id};
    return a.tape->record(OpKind::silu, ids);
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end)
{
    const NodeId ids[] = {a.id};
    OpAttrs attrs;
    attrs.axis = axis;
    attrs.begin = begin;
    attrs.end = end;
    return a.tape->record(OpKind::slice, ids, attrs);
}

Var concat(std::span<const Var> parts, std::size_t axis)
{
    if (parts.empty()) throw AutodiffError("concat needs at least one input");
    std::vector<NodeId> ids;
    ids.reserve(parts.size());
    for (const auto& p : parts) ids.push_back(p.id);
    OpAttrs attrs;
    attrs.axis = axis;
    return parts.front().tape->record(OpKind::concat, ids, attrs);
}

Var scale(Var a, double c)
{
    const NodeId ids[] = {a.id};
    OpAttrs attrs;
    attrs.scalar = c;
    return a.tape->record(OpKind::scale, ids, attrs);
}

Var shift(Var a, double c)
{
    const NodeId ids[] = {a.id};
    OpAttrs attrs;
    attrs.scalar = c;
    return a.tape->record(OpKind::shift, ids, attrs);
}

Var linear(Var x, Var w, Var b)
{
    auto y = matmul(x, w);
    return add(y, broadcast_to(b, y.shape()));
}

GradCheckReport grad_check(Tape& tape, const std::function<Var(Tape&)>& f, double tolerance, double h)
{
    auto eval = [&]() {
        tape.clear();
        return f(tape).value()[0];
    };

    const double base = eval();
    const double again = eval();
    if (std::memcmp(&base, &again, sizeof(double)) != 0) {
        throw AutodiffError("grad_check: objective is not deterministic (" + std::to_string(base) + " vs " +
                            std::to_string(again) + ")");
    }

    tape.clear();
    auto loss = f(tape);
    tape.backward(loss);

    GradCheckReport report;
    report.tolerance = tolerance;
    const auto params = tape.parameters();
    std::vector<Tensor> analytic;
    for (auto id : params) analytic.push_back(tape.grad(id));

    for (std::size_t p = 0; p < params.size(); ++p) {
        const NodeId id = params[p];
        double worst = 0.0;
        const std::size_t count = tape.value(id).size();
        for (std::size_t i = 0; i < count; ++i) {
            const double orig = tape.value(id)[i];
            auto at = [&](double offset) {
                tape.parameter_value(id)[i] = orig + offset;
                return eval();
            };
            const double d1 = at(h) - at(-h);
            const double d2 = at(2.0 * h) - at(-2.0 * h);
            tape.parameter_value(id)[i] = orig;
            const double numeric = (8.0 * d1 - d2) / (12.0 * h);
            const double a = analytic[p][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        report.names.push_back(tape.name(id));
        report.max_rel_error.push_back(worst);
        report.worst = std::max(report.worst, worst);
    }
    tape.clear();
    report.passed = report.worst < tolerance;
    return report;
}

}  // namespace fvdm::ad
