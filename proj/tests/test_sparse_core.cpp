#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "lod/eigensolver.hpp"
#include "lod/sparse.hpp"

using namespace lod;

namespace {

SparseMatrix from_dense(const DenseMatrix& D) {
    SparseMatrix A(D.rows(), D.cols());
    for (int i = 0; i < D.rows(); ++i)
        for (int j = 0; j < D.cols(); ++j)
            if (D(i, j) != 0.0) A.coeffRef(i, j) = D(i, j);
    A.makeCompressed();
    return A;
}

SparseMatrix sparse_diag(const Vector& d) {
    SparseMatrix A(d.size(), d.size());
    for (int i = 0; i < d.size(); ++i) A.coeffRef(i, i) = d[i];
    A.makeCompressed();
    return A;
}

// Explicit 0/1 restriction matrix selecting the given global indices.
DenseMatrix restriction(int n, const std::vector<int>& idx) {
    DenseMatrix R = DenseMatrix::Zero(static_cast<int>(idx.size()), n);
    for (int i = 0; i < static_cast<int>(idx.size()); ++i) R(i, idx[i]) = 1.0;
    return R;
}

}  // namespace

TEST_CASE("gather equals restriction-matrix sandwich") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int n : {6, 8}) {
        DenseMatrix D(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) D(i, j) = (i + j) % 3 == 0 ? u(rng) : 0.0;
        const SparseMatrix A = from_dense(D);

        const std::vector<int> rows{0, 2, n - 1};
        const std::vector<int> cols{1, 3, n - 2, n - 1};
        const SparseMatrix S = gather_submatrix(A, rows, cols);
        const DenseMatrix expected =
            restriction(n, rows) * D * restriction(n, cols).transpose();
        CHECK((DenseMatrix(S) - expected).cwiseAbs().maxCoeff() == 0.0);

        Vector v(n);
        for (int i = 0; i < n; ++i) v[i] = u(rng);
        const Vector g = gather_vector(v, cols);
        CHECK((g - restriction(n, cols) * v).cwiseAbs().maxCoeff() == 0.0);

        Vector out = Vector::Zero(n);
        scatter_add(out, g, cols);
        scatter_add(out, g, cols);
        CHECK((out - 2.0 * restriction(n, cols).transpose() * g).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("gather identity") {
    const SparseMatrix A = from_dense((DenseMatrix(3, 3) << 1, 2, 0, 0, 3, 4, 5, 0, 6).finished());
    std::vector<int> all{0, 1, 2};
    CHECK((DenseMatrix(gather_submatrix(A, all, all)) - DenseMatrix(A)).cwiseAbs().maxCoeff() ==
          0.0);
    const SparseMatrix E = gather_submatrix(A, std::vector<int>{}, all);
    CHECK(E.rows() == 0);
    CHECK(E.cols() == 3);
}

TEST_CASE("spd factorization") {
    const SparseMatrix A = from_dense((DenseMatrix(2, 2) << 2, 1, 1, 2).finished());
    SpdFactorization fac(A);
    Vector b(2);
    b << 3, 3;
    const Vector x = fac.solve(b);
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-14));

    // Solve then multiply is the identity.
    Vector y(2);
    y << -0.3, 1.7;
    CHECK(((A * fac.solve(y)) - y).norm() <= 1e-12);

    DenseMatrix B(2, 2);
    B << 3, 1, 3, -1;
    const DenseMatrix X = fac.solve(B);
    CHECK((A * X - B).cwiseAbs().maxCoeff() <= 1e-12);

    const SparseMatrix Ind =
        from_dense((DenseMatrix(2, 2) << 1, 2, 2, 1).finished());  // eigenvalues 3, -1
    CHECK_THROWS_AS(SpdFactorization{Ind}, std::runtime_error);
}

TEST_CASE("sparse text roundtrip") {
    const SparseMatrix A =
        from_dense((DenseMatrix(3, 4) << 0, 1.5, 0, -2, 0, 0, 0.25, 0, 3, 0, 0, 0).finished());
    std::stringstream buf;
    write_sparse(buf, A);
    const SparseMatrix B = read_sparse(buf);
    CHECK(B.rows() == 3);
    CHECK(B.cols() == 4);
    CHECK((DenseMatrix(A) - DenseMatrix(B)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eigensolver diagonal pencils") {
    {
        Vector d(3);
        d << 1, 2, 3;
        const SparseMatrix A = sparse_diag(d);
        const SparseMatrix M = sparse_diag(Vector::Ones(3));
        EigOptions opts;
        opts.n_ev = 2;
        const EigResult r = generalized_eig_smallest(A, M, opts);
        CHECK(r.lambdas[0] == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(r.lambdas[1] == doctest::Approx(2.0).epsilon(1e-10));
        // Eigenvectors are M-orthonormal.
        const DenseMatrix G = r.vectors.transpose() * (M * r.vectors);
        CHECK((G - DenseMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-8);
    }
    {
        // A == M: every eigenvalue is 1.
        Vector d(4);
        d << 2, 3, 4, 5;
        const SparseMatrix A = sparse_diag(d);
        EigOptions opts;
        opts.n_ev = 3;
        const EigResult r = generalized_eig_smallest(A, A, opts);
        for (int j = 0; j < 3; ++j) CHECK(r.lambdas[j] == doctest::Approx(1.0).epsilon(1e-10));
    }
    {
        Vector a(2), m(2);
        a << 2, 5;
        m << 1, 2;
        EigOptions opts;
        opts.n_ev = 2;
        const EigResult r = generalized_eig_smallest(sparse_diag(a), sparse_diag(m), opts);
        CHECK(r.lambdas[0] == doctest::Approx(2.0).epsilon(1e-10));
        CHECK(r.lambdas[1] == doctest::Approx(2.5).epsilon(1e-10));
    }
}

TEST_CASE("eigensolver determinism and validation") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 20;
    DenseMatrix Q(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) Q(i, j) = u(rng) - 0.5;
    const SparseMatrix A = from_dense(DenseMatrix(Q * Q.transpose()) +
                                      DenseMatrix(DenseMatrix::Identity(n, n)));
    const SparseMatrix M = sparse_diag(Vector::Ones(n));
    EigOptions opts;
    opts.n_ev = 4;
    const EigResult r1 = generalized_eig_smallest(A, M, opts);
    const EigResult r2 = generalized_eig_smallest(A, M, opts);
    CHECK((r1.lambdas - r2.lambdas).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r1.vectors - r2.vectors).cwiseAbs().maxCoeff() == 0.0);

    // Residual contract holds for each returned pair.
    for (int j = 0; j < opts.n_ev; ++j) {
        const Vector Av = A * r1.vectors.col(j);
        CHECK((Av - r1.lambdas[j] * (M * r1.vectors.col(j))).norm() <= opts.tol * Av.norm());
    }

    opts.n_ev = 0;
    CHECK_THROWS_AS(generalized_eig_smallest(A, M, opts), std::invalid_argument);
    opts.n_ev = n + 1;
    CHECK_THROWS_AS(generalized_eig_smallest(A, M, opts), std::invalid_argument);
    opts.n_ev = 1;
    opts.tol = 0.0;
    CHECK_THROWS_AS(generalized_eig_smallest(A, M, opts), std::invalid_argument);
}
