#include <doctest.h>

#include <cmath>

#include "fvdm/linalg.hpp"
#include "fvdm/rng.hpp"
#include "fvdm/tensor.hpp"

using namespace fvdm;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b)
{
    Tensor out({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    }
    return out;
}

Tensor random_matrix(RngStream& rng, std::size_t r, std::size_t c)
{
    return gaussian(rng, {r, c});
}

}  // namespace

TEST_CASE("philox4x32-10 known-answer vectors")
{
    auto a = philox4x32({0, 0, 0, 0}, {0, 0});
    CHECK(a == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    auto b = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    CHECK(b == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    auto c = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    CHECK(c == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("gaussian is a pure function of (seed, stream, counter)")
{
    RngStream r1{7, 0, 0};
    RngStream r2{7, 0, 0};
    auto a = gaussian(r1, {2});
    auto b = gaussian(r2, {2});
    CHECK(bit_equal(a, b));
    CHECK(r1.counter == 2);

    // Drawing in pieces or all at once yields the same sequence.
    RngStream r3{7, 0, 0};
    auto whole = gaussian(r3, {5});
    RngStream r4{7, 0, 0};
    auto p1 = gaussian(r4, {2});
    auto p2 = gaussian(r4, {3});
    CHECK(whole[0] == p1[0]);
    CHECK(whole[1] == p1[1]);
    CHECK(whole[4] == p2[2]);

    CHECK_THROWS_AS(gaussian(r1, {0}), NumericsError);
    CHECK_THROWS_AS(gaussian(r1, {3, 0}), NumericsError);
}

TEST_CASE("gaussian moments over 1e5 draws")
{
    RngStream rng{12345, 3, 0};
    auto t = gaussian(rng, {100000});
    double m = 0.0, v = 0.0;
    for (double x : t.data()) m += x;
    m /= t.size();
    for (double x : t.data()) v += (x - m) * (x - m);
    v /= (t.size() - 1);
    CHECK(m > -0.02);
    CHECK(m < 0.02);
    CHECK(v > 0.97);
    CHECK(v < 1.03);
}

TEST_CASE("distinct stream ids are uncorrelated")
{
    RngStream a{99, 1, 0};
    RngStream b{99, 2, 0};
    auto x = gaussian(a, {10000});
    auto y = gaussian(b, {10000});
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.05);

    auto s1 = a.substream(4);
    auto s2 = a.substream(5);
    CHECK(s1.stream_id != s2.stream_id);
    CHECK(s1 == a.substream(4));
}

TEST_CASE("uniform stays in the open unit interval")
{
    RngStream rng{1, 1, 0};
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("matmul")
{
    SUBCASE("identity")
    {
        RngStream rng{3, 0, 0};
        auto a = random_matrix(rng, 4, 3);
        CHECK(bit_equal(matmul(Tensor::identity(4), a), a));
    }
    SUBCASE("hand arithmetic")
    {
        auto c = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}}));
        CHECK(c == Tensor::matrix({{2}, {4}}));
    }
    SUBCASE("naive triple-loop oracle")
    {
        RngStream rng{4, 0, 0};
        for (int trial = 0; trial < 20; ++trial) {
            auto a = random_matrix(rng, 5, 5);
            auto b = random_matrix(rng, 5, 5);
            CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
        }
        auto a = random_matrix(rng, 3, 7);
        auto b = random_matrix(rng, 7, 2);
        CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
    }
    SUBCASE("mismatch")
    {
        CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), NumericsError);
    }
}

TEST_CASE("sym_eigen")
{
    SUBCASE("diagonal")
    {
        Tensor d({3, 3});
        d.at(0, 0) = 1;
        d.at(1, 1) = 2;
        d.at(2, 2) = 3;
        auto [vals, vecs] = sym_eigen(d);
        CHECK(vals[0] == doctest::Approx(1.0));
        CHECK(vals[1] == doctest::Approx(2.0));
        CHECK(vals[2] == doctest::Approx(3.0));
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(std::abs(vecs.at(j, j)) == doctest::Approx(1.0));
        }
    }
    SUBCASE("2x2 characteristic polynomial")
    {
        auto [vals, vecs] = sym_eigen(Tensor::matrix({{2, 1}, {1, 2}}));
        CHECK(vals[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(vals[1] == doctest::Approx(3.0).epsilon(1e-12));
    }
    SUBCASE("random SPD reconstruction")
    {
        RngStream rng{5, 0, 0};
        auto g = random_matrix(rng, 8, 8);
        auto a = matmul(g, transpose(g)) + Tensor::identity(8);
        auto [vals, vecs] = sym_eigen(a);
        Tensor scaled = vecs;
        for (std::size_t i = 0; i < 8; ++i) {
            for (std::size_t j = 0; j < 8; ++j) scaled.at(i, j) *= vals[j];
        }
        auto rec = matmul(scaled, transpose(vecs));
        CHECK(frobenius_norm(rec - a) / frobenius_norm(a) < 1e-8);
        for (std::size_t i = 1; i < 8; ++i) CHECK(vals[i - 1] <= vals[i]);
    }
    SUBCASE("non-symmetric rejected")
    {
        CHECK_THROWS_AS(sym_eigen(Tensor::matrix({{1, 2}, {0, 1}})), NumericsError);
    }
}

TEST_CASE("spd helpers")
{
    auto a = Tensor::matrix({{4, 2}, {2, 3}});
    auto inv = spd_inverse(a);
    CHECK(max_abs_diff(matmul(a, inv), Tensor::identity(2)) < 1e-14);
    auto x = spd_solve(a, Tensor::vector({2, 1}));
    CHECK(x[0] == doctest::Approx(0.5));
    CHECK(x[1] == doctest::Approx(0.0));
    CHECK(spd_logdet(a) == doctest::Approx(std::log(8.0)));
    CHECK_THROWS_AS(cholesky(Tensor::matrix({{1, 2}, {2, 1}})), NumericsError);
}

TEST_CASE("tensor invariants")
{
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), NumericsError);
    Tensor t({2});
    t[0] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(t.require_finite("test"), NumericsError);
}
