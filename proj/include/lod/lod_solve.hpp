#pragma once

#include "lod/assembly.hpp"
#include "lod/correctors.hpp"
#include "lod/grid.hpp"
#include "lod/sparse.hpp"

namespace lod {

enum class RhsMode { Corrected, Plain };
enum class SourceMode { Boundary, Total };

/// Masked two-scale system matrix B^H (P_h+Q_h) A_h (P_h+Q_h)^T B^H.
SparseMatrix assemble_lod(const SparseMatrix& A_h, const SparseMatrix& P_h,
                          const SparseMatrix& Q_h, const SparseMatrix& B_H);

/// Masked coarse load B^H (P_h+Q_h) f_h (or B^H P_h f_h in plain mode).
Vector lod_rhs(const Vector& f_h, const SparseMatrix& P_h, const SparseMatrix& Q_h,
               const SparseMatrix& B_H, RhsMode mode = RhsMode::Corrected);

struct LODSystem {
    SparseMatrix A_lod;  // masked product, Dirichlet rows/cols zero
    Vector f_lod;
    SparseMatrix PQ;     // P_h + Q_h, for prolongation
    std::vector<int> active_coarse;
};

LODSystem build_lod_system(const AssembledForms& forms, const SparseMatrix& Q_h,
                           const Vector& f_h, RhsMode mode = RhsMode::Corrected);

struct LODSolution {
    Vector u_H;  // coarse coefficients
    Vector u_h;  // prolonged fine representation
};

/// Coarse solve (unit diagonal inserted on Dirichlet rows) plus prolongation.
LODSolution solve_lod(const LODSystem& system);

/// Masked fine-grid solve of the reference problem with data f, g, q;
/// returns the physical solution including the Dirichlet lift.
Vector solve_fine_reference(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                            const AssembledForms& forms, const ScalarField2D& f,
                            const ScalarField2D& g, const ScalarField2D& q);

struct PGOptions {
    int k = 1;
    int threads = 1;
    RhsMode rhs = RhsMode::Plain;
};

struct PGResult {
    Vector u_H;
    SparseMatrix A_pg;  // masked system, Dirichlet rows/cols zero
};

/// Petrov-Galerkin variant: the system matrix is assembled patch by patch,
/// contracting each local corrector into its column immediately, so no
/// coarse-by-fine corrector matrix ever exists in memory.
PGResult pg_assemble_and_solve(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                               const CoefficientField& kappa, const Vector& f_h,
                               const PGOptions& opts);

struct BvpConfig {
    ScalarField2D f;  // volume load, may be null
    ScalarField2D g;  // Dirichlet data, may be null
    ScalarField2D q;  // Neumann data, may be null
    SourceMode source_mode = SourceMode::Boundary;
    bool source_correctors = true;  // false: skip the rough-rhs correction
    int k = 1;
    int threads = 1;
};

struct BvpResult {
    Vector u_h;    // physical fine solution including the lift
    Vector u_H;    // coarse coefficients
    Vector q_hat;  // source corrector used (zero when disabled)
};

BvpResult solve_bvp(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                    const CoefficientField& kappa, const BvpConfig& config);

}  // namespace lod
