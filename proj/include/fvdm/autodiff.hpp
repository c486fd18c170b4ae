#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fvdm/tensor.hpp"

namespace fvdm::ad {

class AutodiffError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using NodeId = std::size_t;

enum class OpKind {
    parameter,
    constant,
    add,
    sub,
    mul,
    matmul,
    transpose,
    broadcast,
    sum,
    mean,
    softmax,
    layer_norm,
    tanh,
    silu,
    slice,
    concat,
    scale,
    shift,
    custom,
};

const char* op_name(OpKind kind);

inline constexpr std::size_t kAllAxes = std::numeric_limits<std::size_t>::max();
inline constexpr double kLayerNormEps = 1e-5;

/// Op-specific arguments. Unused fields are ignored by each kind.
struct OpAttrs {
    std::size_t axis = 0;    // sum/mean (kAllAxes reduces to shape [1]), softmax, slice, concat
    std::size_t begin = 0;   // slice
    std::size_t end = 0;     // slice
    double scalar = 1.0;     // scale, shift
    Shape shape;             // broadcast target
};

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    NodeId id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Receives the output gradient and the tape; accumulates into parents via Tape::accumulate.
using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

class Tape {
public:
    /// Registers a trainable leaf. Parameters must precede every other node
    /// so that clear() can drop everything recorded after them.
    Var parameter(Tensor value, std::string name = {});
    Var constant(Tensor value);

    /// Records one differentiable operation and computes its forward value.
    Var record(OpKind kind, std::span<const NodeId> inputs, const OpAttrs& attrs = {});

    /// Escape hatch for operations outside the built-in set.
    Var custom(Tensor value, std::vector<NodeId> parents, BackwardFn backward);

    /// Reverse pass from a scalar (single-element) node. Parameter gradients
    /// accumulate across calls; intermediate gradients are reset each call.
    void backward(Var loss);

    /// Drops all non-parameter nodes and zeroes parameter gradients.
    void clear();
    void zero_grad();

    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeId>& parameters() const { return params_; }
    const std::string& name(NodeId id) const { return nodes_.at(id).name; }
    OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
    const std::vector<NodeId>& parents(NodeId id) const { return nodes_.at(id).parents; }

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    /// Mutable access for parameter leaves only (optimizers, finite differences).
    Tensor& parameter_value(NodeId id);
    /// Gradient of a node; zeros if none has been accumulated.
    Tensor grad(NodeId id) const;

    /// Adds `g` into the gradient of `id` (used by backward rules).
    void accumulate(NodeId id, const Tensor& g);

private:
    struct Node {
        OpKind kind = OpKind::constant;
        Tensor value;
        std::vector<NodeId> parents;
        OpAttrs attrs;
        Tensor grad;  // empty until something flows in
        bool requires_grad = false;
        BackwardFn custom_backward;
        std::string name;
    };

    Var push(Node node);
    void propagate(NodeId id);

    std::vector<Node> nodes_;
    std::vector<NodeId> params_;
};

// Typed front-ends over Tape::record.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var broadcast_to(Var a, Shape shape);
Var sum(Var a, std::size_t axis = kAllAxes);
Var mean(Var a, std::size_t axis = kAllAxes);
Var softmax(Var a, std::size_t axis);
Var layer_norm(Var a);
Var tanh(Var a);
Var silu(Var a);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(std::span<const Var> parts, std::size_t axis);
Var scale(Var a, double c);
Var shift(Var a, double c);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

/// x W + b with b of shape [cols] broadcast over rows.
Var linear(Var x, Var w, Var b);

struct GradCheckReport {
    std::vector<std::string> names;
    std::vector<double> max_rel_error;  // one per parameter, max over entries
    double worst = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Compares reverse-mode gradients of every tape parameter against
/// fourth-order central differences, entrywise relative error with
/// denominator max(|a|, |n|, 1e-8). `f` rebuilds the loss on a cleared tape
/// and must be deterministic; a mismatch between two evaluations raises
/// AutodiffError.
GradCheckReport grad_check(Tape& tape, const std::function<Var(Tape&)>& f, double tolerance, double h = 1e-3);

}  // namespace fvdm::ad
