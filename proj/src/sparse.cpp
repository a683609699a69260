#include "lod/sparse.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lod {

namespace {

void check_index_list(std::span<const int> idx, int bound, const char* what) {
    int prev = -1;
    for (int i : idx) {
        if (i <= prev || i >= bound)
            throw std::invalid_argument(std::string("gather: ") + what +
                                        " index list must be strictly increasing and in range");
        prev = i;
    }
}

}  // namespace

SparseMatrix gather_submatrix(const SparseMatrix& A, std::span<const int> rows,
                              std::span<const int> cols) {
    check_index_list(rows, static_cast<int>(A.rows()), "row");
    check_index_list(cols, static_cast<int>(A.cols()), "column");

    std::vector<int> col_pos(A.cols(), -1);
    for (int j = 0; j < static_cast<int>(cols.size()); ++j) col_pos[cols[j]] = j;

    SparseMatrix out(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < static_cast<int>(rows.size()); ++i)
        for (SparseMatrix::InnerIterator it(A, rows[i]); it; ++it)
            if (col_pos[it.col()] >= 0) trips.emplace_back(i, col_pos[it.col()], it.value());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

Vector gather_vector(const Vector& v, std::span<const int> indices) {
    Vector out(indices.size());
    for (int i = 0; i < static_cast<int>(indices.size()); ++i) out[i] = v[indices[i]];
    return out;
}

void scatter_add(Vector& out, const Vector& v, std::span<const int> indices) {
    for (int i = 0; i < static_cast<int>(indices.size()); ++i) out[indices[i]] += v[i];
}

SpdFactorization::SpdFactorization(const SparseMatrix& A) {
    Eigen::SparseMatrix<double> Ac = A;  // LDLT wants column-major
    ldlt_.compute(Ac);
    if (ldlt_.info() != Eigen::Success)
        throw std::runtime_error("SpdFactorization: factorization failed (structural problem)");
    const double min_pivot = ldlt_.vectorD().minCoeff();
    if (!(min_pivot > 0.0))
        throw std::runtime_error("SpdFactorization: matrix not positive definite, min pivot " +
                                 std::to_string(min_pivot));
}

Vector SpdFactorization::solve(const Vector& b) const { return ldlt_.solve(b); }

DenseMatrix SpdFactorization::solve(const DenseMatrix& B) const { return ldlt_.solve(B); }

void write_sparse(std::ostream& os, const SparseMatrix& A) {
    os << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
    os.precision(17);
    for (int i = 0; i < A.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(A, i); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

SparseMatrix read_sparse(std::istream& is) {
    int rows = 0, cols = 0;
    long nnz = 0;
    if (!(is >> rows >> cols >> nnz)) throw std::runtime_error("read_sparse: bad header");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(nnz);
    for (long n = 0; n < nnz; ++n) {
        int i = 0, j = 0;
        double v = 0.0;
        if (!(is >> i >> j >> v)) throw std::runtime_error("read_sparse: truncated entry list");
        trips.emplace_back(i, j, v);
    }
    SparseMatrix A(rows, cols);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

}  // namespace lod
