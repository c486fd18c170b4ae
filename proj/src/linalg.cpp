#include "fvdm/linalg.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace fvdm {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> view(const Tensor& a)
{
    return {a.data().data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols())};
}

Tensor from_eigen(const RowMatrix& m)
{
    Tensor out({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    Eigen::Map<RowMatrix>(out.data().data(), m.rows(), m.cols()) = m;
    return out;
}

void require_square(const Tensor& a, const char* op)
{
    if (a.rank() != 2 || a.rows() != a.cols()) {
        throw NumericsError(std::string(op) + " expects a square matrix, got " + shape_string(a.shape()));
    }
}

Eigen::LLT<RowMatrix> factor(const Tensor& a, const char* op)
{
    require_square(a, op);
    a.require_finite(op);
    Eigen::LLT<RowMatrix> llt(view(a));
    if (llt.info() != Eigen::Success) {
        throw NumericsError(std::string(op) + ": matrix is not positive definite");
    }
    return llt;
}

}  // namespace

SymEigen sym_eigen(const Tensor& a)
{
    require_square(a, "sym_eigen");
    a.require_finite("sym_eigen");
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(a.at(i, j) - a.at(j, i)) > 1e-9) {
                throw NumericsError("sym_eigen: matrix is not symmetric");
            }
        }
    }
    Eigen::SelfAdjointEigenSolver<RowMatrix> solver(view(a));
    if (solver.info() != Eigen::Success) {
        throw NumericsError("sym_eigen: solver did not converge");
    }
    Tensor values({n});
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = solver.eigenvalues()(static_cast<Eigen::Index>(i));
    }
    return {std::move(values), from_eigen(solver.eigenvectors())};
}

Tensor cholesky(const Tensor& a)
{
    auto llt = factor(a, "cholesky");
    return from_eigen(RowMatrix(llt.matrixL()));
}

Tensor spd_inverse(const Tensor& a)
{
    auto llt = factor(a, "spd_inverse");
    const auto n = static_cast<Eigen::Index>(a.rows());
    RowMatrix inv = llt.solve(RowMatrix::Identity(n, n));
    RowMatrix sym = 0.5 * (inv + inv.transpose());
    return from_eigen(sym);
}

Tensor spd_solve(const Tensor& a, const Tensor& b)
{
    auto llt = factor(a, "spd_solve");
    const std::size_t n = a.rows();
    if (b.dim(0) != n || b.rank() > 2) {
        throw NumericsError("spd_solve: right-hand side shape " + shape_string(b.shape()) + " incompatible with " +
                            shape_string(a.shape()));
    }
    const auto k = static_cast<Eigen::Index>(b.rank() == 2 ? b.cols() : 1);
    Eigen::Map<const RowMatrix> rhs(b.data().data(), static_cast<Eigen::Index>(n), k);
    RowMatrix x = llt.solve(RowMatrix(rhs));
    Tensor out(b.shape());
    Eigen::Map<RowMatrix>(out.data().data(), static_cast<Eigen::Index>(n), k) = x;
    return out;
}

double spd_logdet(const Tensor& a)
{
    auto llt = factor(a, "spd_logdet");
    const RowMatrix l = llt.matrixL();
    double s = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        s += std::log(l(i, i));
    }
    return 2.0 * s;
}

}  // namespace fvdm
