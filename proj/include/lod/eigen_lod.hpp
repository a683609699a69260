#pragma once

#include "lod/assembly.hpp"
#include "lod/correctors.hpp"
#include "lod/eigensolver.hpp"
#include "lod/grid.hpp"
#include "lod/lod_solve.hpp"
#include "lod/sparse.hpp"

namespace lod {

/// Masked coarse-corrected mass matrix B^H (P_h+Q_h) M_h (P_h+Q_h)^T B^H.
SparseMatrix lod_mass(const SparseMatrix& M_h, const SparseMatrix& P_h, const SparseMatrix& Q_h,
                      const SparseMatrix& B_H);

/// Smallest eigenpairs of the pencil (A, M) restricted to the active index
/// set; returned vectors are scattered back to full length.
EigResult restricted_eig(const SparseMatrix& A, const SparseMatrix& M,
                         const std::vector<int>& active, const EigOptions& opts);

struct EvpConfig {
    int k = 1;
    int n_ev = 1;
    int threads = 1;
    double tol = 1e-8;
    int max_iter = 500;
};

struct EvpResult {
    Vector lambdas;   // ascending
    DenseMatrix u_H;  // coarse coefficients, one eigenvector per column
    DenseMatrix u_h;  // prolonged fine representations, L2-normalized
};

EvpResult solve_linear_evp(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                           const CoefficientField& kappa, const std::optional<PotentialField>& V,
                           const EvpConfig& config);

/// Two-grid refinement of one eigenpair: one fine solve driven by the coarse
/// eigenvalue, then a Rayleigh quotient. A_op must include the potential.
std::pair<double, Vector> post_process(double lambda_H, const Vector& u_lod,
                                       const SparseMatrix& A_op, const SparseMatrix& M_h,
                                       const std::vector<int>& active_fine);

/// E(v) = 1/2 v'(A_h+M_Vh)v + beta/4 * int v^4.
double energy(const TwoScaleMesh& mesh, const Vector& v, const SparseMatrix& A_h,
              const SparseMatrix& M_Vh, double beta);

/// Everything the damping iteration reuses across steps.
struct GpeSetup {
    TwoScaleMesh mesh;
    BoundarySpec bc;
    double beta = 0.0;
    AssembledForms forms;  // includes M_Vh
    SparseMatrix Q_h;      // correctors of the linear form A_h + M_Vh
    SparseMatrix A_lod;    // corrected linear operator
    SparseMatrix M_lod;
    SparseMatrix PQ;       // P_h + Q_h
    EigOptions eig;
};

GpeSetup gpe_setup(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                   const CoefficientField& kappa, const std::optional<PotentialField>& V,
                   double beta, int k, int threads = 1);

/// Damping-iteration state. The density is kept as a convex combination of
/// squared fine iterates; all pairings against it go through the
/// density-weighted mass assembly.
struct ODAState {
    int nu = 0;
    Vector u_H;     // current iterate, coarse coefficients
    Vector u_fine;  // prolonged, L2-normalized, sign-normalized
    std::vector<std::pair<double, Vector>> density;
    double B_val = 0.0;
    double d_val = 0.0;
    double E_val = 0.0;
    double lambda_val = 0.0;
    double s_val = 0.0;
    double c_val = 0.0;
    double alpha = 0.0;
    bool converged = false;
};

ODAState gpe_initial_step(const GpeSetup& setup);

ODAState gpe_oda_iterate(const ODAState& state, const GpeSetup& setup, double delta_tol);

struct GpeRun {
    ODAState state;
    int iterations = 0;
    std::vector<double> energy_history;  // E after each accepted step
};

GpeRun gpe_solve(const GpeSetup& setup, double delta_tol = 1e-9, int max_iter = 200);

/// One fine solve against the converged density, then the nonlinear
/// Rayleigh-type quotient.
std::pair<double, Vector> gpe_post_process(const ODAState& state, const GpeSetup& setup);

}  // namespace lod
