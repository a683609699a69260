#include "lod/eigensolver.hpp"

#include <Eigen/Eigenvalues>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lod {

namespace {

// M-orthogonalize the columns of W against V (if any) and each other,
// dropping directions that collapse; the survivors are M-orthonormal.
DenseMatrix m_orthonormalize_block(const DenseMatrix& W, const DenseMatrix& V,
                                   const SparseMatrix& M) {
    DenseMatrix out(W.rows(), W.cols());
    int kept = 0;
    for (int j = 0; j < W.cols(); ++j) {
        Vector w = W.col(j);
        const double scale0 = std::sqrt(std::max(w.dot(M * w), 0.0));
        if (scale0 == 0.0) continue;
        for (int pass = 0; pass < 2; ++pass) {
            if (V.cols() > 0) w -= V * (V.transpose() * (M * w));
            if (kept > 0)
                w -= out.leftCols(kept) * (out.leftCols(kept).transpose() * (M * w));
        }
        const double scale = std::sqrt(std::max(w.dot(M * w), 0.0));
        if (scale <= 1e-10 * scale0) continue;  // numerically dependent
        out.col(kept++) = w / scale;
    }
    return out.leftCols(kept);
}

}  // namespace

EigResult generalized_eig_smallest(const SparseMatrix& A, const SparseMatrix& M,
                                   const EigOptions& opts) {
    const int n = static_cast<int>(A.rows());
    if (opts.n_ev < 1 || opts.n_ev > n)
        throw std::invalid_argument("eigensolver: n_ev out of range");
    if (!(opts.tol > 0.0)) throw std::invalid_argument("eigensolver: tol must be positive");
    if (A.cols() != n || M.rows() != n || M.cols() != n)
        throw std::invalid_argument("eigensolver: pencil dimension mismatch");

    const int block = std::min(n, opts.n_ev + 5);
    const int dim_max = std::min(n, std::max(8 * block, 240));
    SparseMatrix K = A;
    if (opts.shift != 0.0) K = A - opts.shift * M;
    SpdFactorization inv(K);

    std::mt19937_64 rng(0x5eed5eedULL + 1000003ULL * static_cast<unsigned long long>(n));
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_block = [&](int cols) {
        DenseMatrix R(n, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < n; ++i) R(i, j) = gauss(rng);
        return R;
    };

    // Accumulated M-orthonormal search space; grown by preconditioned Ritz
    // directions each round so that clustered eigenvalues get resolved by the
    // Rayleigh-Ritz step instead of by power-iteration gaps.
    DenseMatrix V =
        m_orthonormalize_block(random_block(block), DenseMatrix(n, 0), M);
    Vector best_residuals = Vector::Constant(opts.n_ev, std::numeric_limits<double>::infinity());
    for (int it = 0; it < opts.max_iter; ++it) {
        DenseMatrix H = V.transpose() * (A * V);
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (H + H.transpose()));
        if (es.info() != Eigen::Success)
            throw std::runtime_error("eigensolver: dense Rayleigh-Ritz solve failed");
        const Vector theta = es.eigenvalues();  // ascending
        const DenseMatrix X = V * es.eigenvectors();

        bool converged = X.cols() >= opts.n_ev;
        for (int j = 0; j < opts.n_ev && converged; ++j) {
            const Vector Ax = A * X.col(j);
            const double res = (Ax - theta[j] * (M * X.col(j))).norm();
            best_residuals[j] = std::min(best_residuals[j], res);
            if (res > opts.tol * Ax.norm()) converged = false;
        }
        if (converged) {
            EigResult out;
            out.lambdas = theta.head(opts.n_ev);
            out.vectors = X.leftCols(opts.n_ev);
            return out;
        }

        if (X.cols() + block > dim_max)
            V = X.leftCols(std::min<int>(X.cols(), 4 * block));  // restart, thick
        const int b = std::min<int>(block, X.cols());
        DenseMatrix W = inv.solve(DenseMatrix(M * X.leftCols(b)));
        W = m_orthonormalize_block(W, V, M);
        if (W.cols() == 0) W = m_orthonormalize_block(random_block(1), V, M);
        if (W.cols() > 0) {
            DenseMatrix grown(n, V.cols() + W.cols());
            grown << V, W;
            V = std::move(grown);
        }
    }
    std::ostringstream msg;
    msg << "eigensolver: no convergence within " << opts.max_iter
        << " iterations; best residuals:";
    for (int j = 0; j < opts.n_ev; ++j) msg << ' ' << best_residuals[j];
    throw std::runtime_error(msg.str());
}

}  // namespace lod
