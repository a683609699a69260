#pragma once

#include "lod/sparse.hpp"

namespace lod {

struct EigOptions {
    int n_ev = 1;
    double tol = 1e-8;
    int max_iter = 500;
    double shift = 0.0;
};

/// Ascending eigenvalues with M-orthonormal eigenvectors (as columns).
struct EigResult {
    Vector lambdas;
    DenseMatrix vectors;
};

/// Smallest eigenpairs of the symmetric pencil (A, M), M positive definite.
/// Shift-invert subspace iteration with Rayleigh-Ritz on an M-orthonormal
/// block; deterministic seeded start block, so repeated calls agree.
EigResult generalized_eig_smallest(const SparseMatrix& A, const SparseMatrix& M,
                                   const EigOptions& opts);

}  // namespace lod
