#pragma once

#include <iosfwd>
#include <memory>

#include "lod/assembly.hpp"
#include "lod/grid.hpp"
#include "lod/sparse.hpp"

namespace lod {

/// Patch-restricted operator and constraint blocks.
struct LocalSystem {
    SparseMatrix A_ell;  // active-fine x active-fine, SPD
    SparseMatrix C_ell;  // active-coarse x active-fine, full row rank
};

LocalSystem local_system(const Patch& patch, const SparseMatrix& A_op, const SparseMatrix& C_h);

/// Corrector right-hand sides for the four corner basis functions of the
/// patch's central coarse element; rows ordered like element_coarse_nodes,
/// identically zero for corners on Gamma_D.
DenseMatrix local_rhs(const TwoScaleMesh& mesh, const Patch& patch, const BoundarySpec& bc,
                      const std::function<ElementMatrix(int)>& cell_block,
                      const SparseMatrix& P_h);

/// Factorization + Schur-complement data reused across the right-hand sides
/// of one patch. Each solve() costs exactly one extra solve with the cached
/// operator factorization.
class SchurCache {
  public:
    SchurCache(LocalSystem sys, int patch_id);

    Vector solve(const Vector& rhs) const;
    const SparseMatrix& constraints() const { return sys_.C_ell; }
    int precompute_solves() const { return static_cast<int>(Y_.cols()); }

  private:
    LocalSystem sys_;
    std::unique_ptr<SpdFactorization> A_inv_;
    DenseMatrix Y_;      // A_ell^{-1} C_ell^T, one column per constraint
    DenseMatrix S_inv_;  // inverse Schur complement
};

/// Rough source functional F^s(v) = int eta1 v + int kappa grad(eta2).grad(v)
/// + boundary int eta3 v; empty members switch their term off.
struct SourceSpec {
    std::vector<double> eta1;  // per-fine-cell samples
    Vector eta2;               // fine nodal vector
    ScalarField2D eta3;        // Neumann-boundary samples

    bool empty() const { return eta1.empty() && eta2.size() == 0 && !eta3; }
};

/// -F^s restricted to the patch's central element, tested against the active
/// fine basis.
Vector source_rhs(const TwoScaleMesh& mesh, const Patch& patch, const BoundarySpec& bc,
                  const std::function<ElementMatrix(int)>& cell_block, const SourceSpec& Fs);

struct PatchStats {
    int ell = 0;
    int n_coarse = 0;  // active coarse nodes in the patch
    int n_fine = 0;    // active fine nodes in the patch
    int solves = 0;    // factorization solves spent on this patch
};

struct CorrectorOptions {
    int k = 1;
    int threads = 1;
};

struct CorrectorResult {
    SparseMatrix Q_h;  // coarse-by-fine corrector matrix
    Vector q_hat;      // source corrector (zero vector when none requested)
    std::vector<PatchStats> stats;
};

/// One pass over all patches: corrector matrix, optional source corrector
/// sharing the same per-patch Schur data, and per-patch cost accounting.
/// Patches may run on several workers; accumulation merges in ascending
/// patch order, so the result is independent of the thread count.
CorrectorResult compute_corrections(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                                    const std::function<ElementMatrix(int)>& cell_block,
                                    const SparseMatrix& A_op, const SparseMatrix& C_h,
                                    const SparseMatrix& P_h, const CorrectorOptions& opts,
                                    const SourceSpec* Fs = nullptr);

/// Convenience overload for the plain diffusion form.
CorrectorResult compute_corrections(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                                    const CoefficientField& kappa, int k, int threads = 1,
                                    const SourceSpec* Fs = nullptr);

/// Per-fine-cell operator blocks kappa*stiffness (+ V*mass when V given).
std::function<ElementMatrix(int)> operator_blocks(const TwoScaleMesh& mesh,
                                                  const CoefficientField& kappa,
                                                  const std::optional<PotentialField>& V =
                                                      std::nullopt);

/// CSV dump "ell,n_coarse,n_fine,solves" with header.
void write_patch_stats_csv(std::ostream& os, const std::vector<PatchStats>& stats);

}  // namespace lod
