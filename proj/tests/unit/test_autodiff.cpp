#include <doctest.h>

#include <cmath>

#include "fvdm/autodiff.hpp"
#include "fvdm/rng.hpp"

using namespace fvdm;
using namespace fvdm::ad;

TEST_CASE("forward values")
{
    Tape tape;
    auto x = tape.constant(Tensor::vector({1.5, -2.0}));
    CHECK(add(x, x).value() == Tensor::vector({3.0, -4.0}));

    auto z = tape.constant(Tensor::matrix({{0.0, 0.0}}));
    auto s = softmax(z, 1);
    CHECK(s.value() == Tensor::matrix({{0.5, 0.5}}));

    auto ln = layer_norm(tape.constant(Tensor::matrix({{1.0, 3.0}})));
    CHECK(ln.value().at(0, 0) == doctest::Approx(-1.0 / std::sqrt(1.0 + kLayerNormEps)));

    auto b = broadcast_to(tape.constant(Tensor::vector({1, 2})), {3, 2});
    CHECK(b.value() == Tensor::matrix({{1, 2}, {1, 2}, {1, 2}}));

    auto m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    auto mv = tape.constant(m);
    CHECK(sum(mv, 0).value() == Tensor::matrix({{5, 7, 9}}));
    CHECK(mean(mv, 1).value() == Tensor::matrix({{2}, {5}}));
    CHECK(sum(mv).value() == Tensor::vector({21}));
    CHECK(slice(mv, 1, 1, 3).value() == Tensor::matrix({{2, 3}, {5, 6}}));
    Var parts[] = {slice(mv, 0, 1, 2), slice(mv, 0, 0, 1)};
    CHECK(concat(parts, 0).value() == Tensor::matrix({{4, 5, 6}, {1, 2, 3}}));
}

TEST_CASE("simple gradients")
{
    Tape tape;
    auto p = tape.parameter(Tensor::vector({0.5, -1.0, 2.0}), "p");

    auto loss = sum(p);
    tape.backward(loss);
    CHECK(tape.grad(p.id) == Tensor::vector({1, 1, 1}));

    tape.clear();
    auto half_sq = scale(sum(mul(p, p)), 0.5);
    tape.backward(half_sq);
    CHECK(tape.grad(p.id) == tape.value(p.id));
}

TEST_CASE("two backward passes accumulate exactly twice")
{
    RngStream rng{11, 0, 0};
    Tape tape;
    auto w = tape.parameter(gaussian(rng, {3, 3}), "w");
    auto x = tape.constant(gaussian(rng, {2, 3}));
    auto loss = sum(tanh(matmul(x, w)));
    tape.backward(loss);
    auto once = tape.grad(w.id);
    tape.backward(loss);
    auto twice = tape.grad(w.id);
    CHECK(bit_equal(twice, 2.0 * once));
}

TEST_CASE("clear keeps parameter values and zeroes gradients")
{
    Tape tape;
    auto p = tape.parameter(Tensor::vector({1.0, 2.0}), "p");
    tape.backward(sum(mul(p, p)));
    CHECK(tape.size() > 1);
    tape.clear();
    CHECK(tape.size() == 1);
    CHECK(tape.value(p.id) == Tensor::vector({1.0, 2.0}));
    CHECK(tape.grad(p.id) == Tensor::vector({0.0, 0.0}));
}

TEST_CASE("errors")
{
    Tape tape;
    auto p = tape.parameter(Tensor::vector({1.0, 2.0}), "p");
    auto q = tape.constant(Tensor::vector({1.0, 2.0, 3.0}));
    CHECK_THROWS_AS(add(p, q), AutodiffError);
    CHECK_THROWS_AS(tape.backward(p), AutodiffError);
    CHECK_THROWS_AS(tape.parameter(Tensor::vector({1.0})), AutodiffError);
    const NodeId ids[] = {p.id};
    CHECK_THROWS_AS(tape.record(static_cast<OpKind>(999), ids), AutodiffError);
    CHECK_THROWS_AS(tape.record(OpKind::constant, ids), AutodiffError);
    const NodeId missing[] = {12345};
    CHECK_THROWS_AS(tape.record(OpKind::tanh, missing), AutodiffError);
    CHECK_THROWS_AS(slice(p, 0, 1, 1), AutodiffError);
    CHECK_THROWS_AS(broadcast_to(q, {2, 2}), AutodiffError);
}

TEST_CASE("grad_check: quadratic form")
{
    RngStream rng{21, 0, 0};
    auto g = gaussian(rng, {4, 4});
    Tensor a = matmul(g, transpose(g));
    Tape tape;
    auto x = tape.parameter(gaussian(rng, {4, 1}), "x");
    auto report = grad_check(
        tape,
        [&](Tape& t) {
            auto am = t.constant(a);
            return scale(sum(mul(x, matmul(am, x))), 0.5);
        },
        1e-8);
    CHECK(report.passed);
    CHECK(report.worst < 1e-8);
}

TEST_CASE("grad_check: softmax attention block")
{
    RngStream rng{22, 0, 0};
    Tape tape;
    auto wq = tape.parameter(0.5 * gaussian(rng, {4, 4}), "wq");
    auto wk = tape.parameter(0.5 * gaussian(rng, {4, 4}), "wk");
    auto wv = tape.parameter(0.5 * gaussian(rng, {4, 4}), "wv");
    const Tensor xs = gaussian(rng, {3, 4});
    const Tensor target = gaussian(rng, {3, 4});
    auto report = grad_check(
        tape,
        [&](Tape& t) {
            auto x = t.constant(xs);
            auto q = matmul(x, wq);
            auto k = matmul(x, wk);
            auto v = matmul(x, wv);
            auto att = softmax(scale(matmul(q, transpose(k)), 0.5), 1);
            auto d = sub(matmul(att, v), t.constant(target));
            return mean(mul(d, d));
        },
        1e-5);
    CHECK(report.passed);
    CHECK(report.max_rel_error.size() == 3);
}

TEST_CASE("grad_check: corrupted backward rule is reported")
{
    Tape tape;
    auto p = tape.parameter(Tensor::vector({0.3, -0.7, 1.1}), "p");
    auto report = grad_check(
        tape,
        [&](Tape& t) {
            // Forward is x^2 but backward claims 3x.
            Tensor sq = hadamard(p.value(), p.value());
            auto node = t.custom(sq, {p.id}, [id = p.id](Tape& tp, const Tensor& g) {
                tp.accumulate(id, hadamard(g, 3.0 * tp.value(id)));
            });
            return sum(node);
        },
        1e-4);
    CHECK_FALSE(report.passed);
    CHECK(report.worst > 0.1);
}

TEST_CASE("grad_check: non-deterministic objective is rejected")
{
    Tape tape;
    auto p = tape.parameter(Tensor::vector({1.0}), "p");
    int calls = 0;
    CHECK_THROWS_AS(grad_check(
                        tape,
                        [&](Tape&) {
                            ++calls;
                            return sum(shift(p, calls * 1e-3));
                        },
                        1e-4),
                    AutodiffError);
}

TEST_CASE("every op kind matches central differences on random shapes")
{
    RngStream rng{31, 0, 0};
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t r = 1 + rng.below(8);
        const std::size_t c = 1 + rng.below(8);
        const std::size_t k = 1 + rng.below(8);
        Tape tape;
        auto a = tape.parameter(gaussian(rng, {r, c}), "a");
        auto b = tape.parameter(gaussian(rng, {r, c}), "b");
        auto w = tape.parameter(gaussian(rng, {c, k}), "w");
        auto bias = tape.parameter(gaussian(rng, {c}), "bias");
        const Tensor weights = gaussian(rng, {r, c});
        auto report = grad_check(
            tape,
            [&](Tape& t) {
                auto h = add(mul(a, b), sub(a, scale(b, 0.7)));
                h = add(h, broadcast_to(bias, {r, c}));
                auto soft = softmax(h, 1);
                auto normed = c > 1 ? layer_norm(h) : h;
                auto act = add(tanh(normed), silu(shift(soft, -0.2)));
                auto proj = matmul(act, w);
                auto col = softmax(transpose(proj), 1);
                Var pieces[] = {slice(act, 0, 0, r), slice(h, 0, 0, 1)};
                auto joined = concat(pieces, 0);
                auto wt = t.constant(weights);
                return add(add(sum(mul(act, wt)), mean(mul(joined, joined))),
                           add(sum(mean(col, 0)), mean(sum(proj, 1))));
            },
            1e-4);
        INFO("trial " << trial << " shape " << r << "x" << c << "x" << k << " worst " << report.worst);
        CHECK(report.passed);
    }
}

TEST_CASE("matmul chain gradient")
{
    RngStream rng{41, 0, 0};
    Tape tape;
    auto a = tape.parameter(gaussian(rng, {3, 4}), "a");
    auto b = tape.parameter(gaussian(rng, {4, 5}), "b");
    auto c = tape.parameter(gaussian(rng, {5, 2}), "c");
    auto report = grad_check(
        tape, [&](Tape&) { return sum(matmul(matmul(a, b), c)); }, 1e-6);
    CHECK(report.passed);
}
