#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <iosfwd>
#include <span>
#include <vector>

namespace lod {

// Row-compressed real matrices carry every assembled system in the toolkit.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Submatrix extraction A[rows][cols]; equivalent to sandwiching A between
/// explicit 0/1 restriction matrices, without materializing them.
SparseMatrix gather_submatrix(const SparseMatrix& A, std::span<const int> rows,
                              std::span<const int> cols);

Vector gather_vector(const Vector& v, std::span<const int> indices);

/// out[indices[i]] += v[i]
void scatter_add(Vector& out, const Vector& v, std::span<const int> indices);

/// Reusable Cholesky-type factorization of a symmetric positive-definite
/// sparse matrix. Throws on structural singularity or indefiniteness.
class SpdFactorization {
  public:
    explicit SpdFactorization(const SparseMatrix& A);

    Vector solve(const Vector& b) const;
    DenseMatrix solve(const DenseMatrix& B) const;
    int dim() const { return static_cast<int>(ldlt_.rows()); }

  private:
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

/// Debug text export: header "rows cols nnz", then 0-based "i j value" lines.
void write_sparse(std::ostream& os, const SparseMatrix& A);
SparseMatrix read_sparse(std::istream& is);

}  // namespace lod
