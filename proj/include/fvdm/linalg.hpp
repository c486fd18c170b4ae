#pragma once

#include "fvdm/tensor.hpp"

namespace fvdm {

struct SymEigen {
    Tensor eigenvalues;   // ascending, shape [n]
    Tensor eigenvectors;  // columns are eigenvectors, shape [n, n]
};

/// Eigendecomposition of a symmetric matrix. Rejects inputs whose
/// asymmetry exceeds 1e-9 (absolute, entrywise).
SymEigen sym_eigen(const Tensor& a);

/// Lower Cholesky factor of a symmetric positive-definite matrix.
Tensor cholesky(const Tensor& a);

/// Inverse of a symmetric positive-definite matrix (symmetrized on output).
Tensor spd_inverse(const Tensor& a);

/// Solves a x = b for SPD a; b may be [n] or [n, k].
Tensor spd_solve(const Tensor& a, const Tensor& b);

/// Log-determinant of an SPD matrix.
double spd_logdet(const Tensor& a);

}  // namespace fvdm
