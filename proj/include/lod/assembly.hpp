#pragma once

#include <functional>
#include <optional>

#include "lod/grid.hpp"
#include "lod/sparse.hpp"

namespace lod {

using ElementMatrix = Eigen::Matrix4d;
using ScalarField2D = std::function<double(double, double)>;

/// Piecewise-constant-per-fine-cell scalar diffusion coefficient.
struct CoefficientField {
    std::vector<double> values;  // lexicographic fine-cell order

    static CoefficientField constant(const TwoScaleMesh& mesh, double value);
    void validate(const TwoScaleMesh& mesh) const;  // positivity + size
};

/// Piecewise-constant-per-fine-cell nonnegative potential.
struct PotentialField {
    std::vector<double> values;

    static PotentialField zero(const TwoScaleMesh& mesh);
    void validate(const TwoScaleMesh& mesh) const;
};

// Exact integrals of the bilinear (Q1) basis on an hx x hy cell, local node
// order counterclockwise from the lower-left corner.
ElementMatrix element_stiffness(double kappa, double hx, double hy);
ElementMatrix element_mass(double hx, double hy);

/// Scatter-accumulate one 4x4 block per cell into the global matrix;
/// ascending cell order keeps the result bit-reproducible.
SparseMatrix assemble_global(const TwoScaleMesh& mesh, Level lv,
                             const std::function<ElementMatrix(int cell)>& cell_block);

SparseMatrix assemble_stiffness(const TwoScaleMesh& mesh, const CoefficientField& kappa);
SparseMatrix assemble_mass(const TwoScaleMesh& mesh, Level lv);

/// Mass matrix weighted by a nonnegative per-fine-cell constant field.
SparseMatrix assemble_weighted_mass(const TwoScaleMesh& mesh, const std::vector<double>& weight);

/// Mass matrix weighted by the squared-density sum(w_i * u_i^2) of fine nodal
/// vectors; 3x3 Gauss per cell, exact for bilinear u.
SparseMatrix assemble_density_weighted_mass(
    const TwoScaleMesh& mesh, const std::vector<std::pair<double, Vector>>& density);

/// P[i][j] = Phi_i(z_j): coarse hat functions evaluated at fine nodes.
SparseMatrix projection_matrix(const TwoScaleMesh& mesh);

/// Diagonal 0/1 masks removing Dirichlet nodes, coarse and fine.
std::pair<SparseMatrix, SparseMatrix> boundary_masks(const TwoScaleMesh& mesh,
                                                     const BoundarySpec& bc);

/// Sorted node indices not on Gamma_D.
std::vector<int> active_nodes(const TwoScaleMesh& mesh, Level lv, const BoundarySpec& bc);

/// 0/1 matrix marking coordinate-identical coarse/fine node pairs.
SparseMatrix vertex_map(const SparseMatrix& P_h);

/// Global constraint matrix C_h = P_h * M_h.
SparseMatrix constraint_matrix(const SparseMatrix& P_h, const SparseMatrix& M_h);

/// Fine load vector with midpoint sampling of f per fine cell.
Vector load_vector(const TwoScaleMesh& mesh, const ScalarField2D& f);

/// Boundary load for Neumann data q, edge-midpoint rule on Gamma_N.
Vector neumann_load(const TwoScaleMesh& mesh, const ScalarField2D& q, const BoundarySpec& bc);

/// Two-step Dirichlet extension: coarse nodal data g_H, then the fine vector
/// that matches g on fine Gamma_D nodes and the coarse interpolant elsewhere.
std::pair<Vector, Vector> dirichlet_extension(const TwoScaleMesh& mesh, const ScalarField2D& g,
                                              const BoundarySpec& bc);

/// integral of v^4 over the domain for a fine nodal vector v (Gauss 4x4).
double quartic_integral(const TwoScaleMesh& mesh, const Vector& v);

/// Load vector with entries integral of v^3 * phi_j (Gauss 4x4).
Vector cubic_load(const TwoScaleMesh& mesh, const Vector& v);

/// The matrices every LOD pipeline needs, assembled once per problem.
struct AssembledForms {
    SparseMatrix A_h;    // fine stiffness
    SparseMatrix M_h;    // fine mass
    SparseMatrix M_Vh;   // potential-weighted mass (zero when no potential)
    SparseMatrix P_h;    // coarse-to-fine projection
    SparseMatrix C_h;    // constraint matrix P_h * M_h
    SparseMatrix B_H;    // coarse Dirichlet mask
    SparseMatrix B_h;    // fine Dirichlet mask
    std::vector<int> active_coarse;
    std::vector<int> active_fine;
};

AssembledForms assemble_forms(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                              const CoefficientField& kappa,
                              const std::optional<PotentialField>& V = std::nullopt);

}  // namespace lod
