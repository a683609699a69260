#include "lod/assembly.hpp"

#include <cmath>
#include <stdexcept>

namespace lod {

namespace {

// Local corner order (counterclockwise from lower-left) as 1D index pairs.
constexpr int corner_ax[4] = {0, 1, 1, 0};
constexpr int corner_ay[4] = {0, 0, 1, 1};

struct Gauss1D {
    std::vector<double> x;  // on [-1, 1]
    std::vector<double> w;
};

Gauss1D gauss_rule(int npts) {
    switch (npts) {
        case 3: {
            const double a = std::sqrt(3.0 / 5.0);
            return {{-a, 0.0, a}, {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0}};
        }
        case 4: {
            const double a = 0.3399810435848562648;
            const double b = 0.8611363115940525752;
            const double wa = 0.6521451548625461426;
            const double wb = 0.3478548451374538574;
            return {{-b, -a, a, b}, {wb, wa, wa, wb}};
        }
        default:
            throw std::invalid_argument("gauss_rule: unsupported point count");
    }
}

double shape(int m, double xi, double eta) {
    const double sx = corner_ax[m] == 0 ? -1.0 : 1.0;
    const double sy = corner_ay[m] == 0 ? -1.0 : 1.0;
    return 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta);
}

// Per-cell quadrature loop shared by the density-weighted assemblies.
template <typename Body>
void for_each_gauss_point(const TwoScaleMesh& mesh, int npts, Body&& body) {
    const Gauss1D g = gauss_rule(npts);
    const double hx = mesh.hx(Level::Fine);
    const double hy = mesh.hy(Level::Fine);
    const double jac = 0.25 * hx * hy;
    const int n_cells = mesh.num_cells(Level::Fine);
    for (int t = 0; t < n_cells; ++t) {
        for (int gx = 0; gx < npts; ++gx)
            for (int gy = 0; gy < npts; ++gy) {
                double N[4];
                for (int m = 0; m < 4; ++m) N[m] = shape(m, g.x[gx], g.x[gy]);
                body(t, N, g.w[gx] * g.w[gy] * jac);
            }
    }
}

}  // namespace

CoefficientField CoefficientField::constant(const TwoScaleMesh& mesh, double value) {
    return {std::vector<double>(mesh.num_cells(Level::Fine), value)};
}

void CoefficientField::validate(const TwoScaleMesh& mesh) const {
    if (static_cast<int>(values.size()) != mesh.num_cells(Level::Fine))
        throw std::invalid_argument("CoefficientField: size does not match fine cell count");
    for (double v : values)
        if (!(v > 0.0)) throw std::invalid_argument("CoefficientField: values must be positive");
}

PotentialField PotentialField::zero(const TwoScaleMesh& mesh) {
    return {std::vector<double>(mesh.num_cells(Level::Fine), 0.0)};
}

void PotentialField::validate(const TwoScaleMesh& mesh) const {
    if (static_cast<int>(values.size()) != mesh.num_cells(Level::Fine))
        throw std::invalid_argument("PotentialField: size does not match fine cell count");
    for (double v : values)
        if (v < 0.0) throw std::invalid_argument("PotentialField: values must be nonnegative");
}

ElementMatrix element_stiffness(double kappa, double hx, double hy) {
    if (!(kappa > 0.0) || !(hx > 0.0) || !(hy > 0.0))
        throw std::invalid_argument("element_stiffness: kappa, hx, hy must be positive");
    // 1D stiffness (1/h)[[1,-1],[-1,1]] and mass (h/6)[[2,1],[1,2]] factors.
    auto k1 = [](double h, int a, int b) { return (a == b ? 1.0 : -1.0) / h; };
    auto m1 = [](double h, int a, int b) { return h * (a == b ? 2.0 : 1.0) / 6.0; };
    ElementMatrix K;
    for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n) {
            const int ax = corner_ax[m], bx = corner_ax[n];
            const int ay = corner_ay[m], by = corner_ay[n];
            K(m, n) = kappa * (k1(hx, ax, bx) * m1(hy, ay, by) + m1(hx, ax, bx) * k1(hy, ay, by));
        }
    return K;
}

ElementMatrix element_mass(double hx, double hy) {
    if (!(hx > 0.0) || !(hy > 0.0))
        throw std::invalid_argument("element_mass: hx, hy must be positive");
    auto m1 = [](double h, int a, int b) { return h * (a == b ? 2.0 : 1.0) / 6.0; };
    ElementMatrix M;
    for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n)
            M(m, n) = m1(hx, corner_ax[m], corner_ax[n]) * m1(hy, corner_ay[m], corner_ay[n]);
    return M;
}

SparseMatrix assemble_global(const TwoScaleMesh& mesh, Level lv,
                             const std::function<ElementMatrix(int)>& cell_block) {
    const int n_nodes = mesh.num_nodes(lv);
    const int n_cells = mesh.num_cells(lv);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(n_cells) * 16);
    for (int t = 0; t < n_cells; ++t) {
        const ElementMatrix block = cell_block(t);
        int gi[4];
        for (int m = 0; m < 4; ++m) gi[m] = mesh.sigma(lv, t, m);
        for (int m = 0; m < 4; ++m)
            for (int n = 0; n < 4; ++n) trips.emplace_back(gi[m], gi[n], block(m, n));
    }
    SparseMatrix A(n_nodes, n_nodes);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

SparseMatrix assemble_stiffness(const TwoScaleMesh& mesh, const CoefficientField& kappa) {
    kappa.validate(mesh);
    const ElementMatrix unit = element_stiffness(1.0, mesh.hx(Level::Fine), mesh.hy(Level::Fine));
    return assemble_global(mesh, Level::Fine,
                           [&](int t) { return ElementMatrix(kappa.values[t] * unit); });
}

SparseMatrix assemble_mass(const TwoScaleMesh& mesh, Level lv) {
    const ElementMatrix Me = element_mass(mesh.hx(lv), mesh.hy(lv));
    return assemble_global(mesh, lv, [&](int) { return Me; });
}

SparseMatrix assemble_weighted_mass(const TwoScaleMesh& mesh, const std::vector<double>& weight) {
    if (static_cast<int>(weight.size()) != mesh.num_cells(Level::Fine))
        throw std::invalid_argument("assemble_weighted_mass: weight size mismatch");
    for (double w : weight)
        if (w < 0.0) throw std::invalid_argument("assemble_weighted_mass: negative weight");
    const ElementMatrix Me = element_mass(mesh.hx(Level::Fine), mesh.hy(Level::Fine));
    return assemble_global(mesh, Level::Fine,
                           [&](int t) { return ElementMatrix(weight[t] * Me); });
}

SparseMatrix assemble_density_weighted_mass(
    const TwoScaleMesh& mesh, const std::vector<std::pair<double, Vector>>& density) {
    const int n_nodes = mesh.num_nodes(Level::Fine);
    for (const auto& [w, u] : density) {
        if (w < 0.0) throw std::invalid_argument("density weights must be nonnegative");
        if (u.size() != n_nodes) throw std::invalid_argument("density vector size mismatch");
    }
    std::vector<Eigen::Triplet<double>> trips;
    for_each_gauss_point(mesh, 3, [&](int t, const double N[4], double wq) {
        int gi[4];
        for (int m = 0; m < 4; ++m) gi[m] = mesh.sigma(Level::Fine, t, m);
        double rho = 0.0;
        for (const auto& [w, u] : density) {
            double val = 0.0;
            for (int m = 0; m < 4; ++m) val += u[gi[m]] * N[m];
            rho += w * val * val;
        }
        for (int m = 0; m < 4; ++m)
            for (int n = 0; n < 4; ++n) trips.emplace_back(gi[m], gi[n], wq * rho * N[m] * N[n]);
    });
    SparseMatrix M(n_nodes, n_nodes);
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

SparseMatrix projection_matrix(const TwoScaleMesh& mesh) {
    const int r = mesh.refine();
    const int nxh = mesh.nx(Level::Fine);
    const int nyh = mesh.ny(Level::Fine);
    std::vector<Eigen::Triplet<double>> trips;
    for (int iy = 0; iy <= mesh.ny(Level::Coarse); ++iy)
        for (int ix = 0; ix <= mesh.nx(Level::Coarse); ++ix) {
            const int i = mesh.node_index(Level::Coarse, ix, iy);
            for (int jy = std::max(0, (iy - 1) * r); jy <= std::min(nyh, (iy + 1) * r); ++jy)
                for (int jx = std::max(0, (ix - 1) * r); jx <= std::min(nxh, (ix + 1) * r); ++jx) {
                    const double vx = 1.0 - std::abs(jx - ix * r) / static_cast<double>(r);
                    const double vy = 1.0 - std::abs(jy - iy * r) / static_cast<double>(r);
                    const double v = vx * vy;
                    if (v > 0.0) trips.emplace_back(i, mesh.node_index(Level::Fine, jx, jy), v);
                }
        }
    SparseMatrix P(mesh.num_nodes(Level::Coarse), mesh.num_nodes(Level::Fine));
    P.setFromTriplets(trips.begin(), trips.end());
    return P;
}

std::vector<int> active_nodes(const TwoScaleMesh& mesh, Level lv, const BoundarySpec& bc) {
    std::vector<int> out;
    for (int i = 0; i < mesh.num_nodes(lv); ++i)
        if (mesh.classify_node(lv, i, bc) != NodeClass::Dirichlet) out.push_back(i);
    return out;
}

std::pair<SparseMatrix, SparseMatrix> boundary_masks(const TwoScaleMesh& mesh,
                                                     const BoundarySpec& bc) {
    auto diag_mask = [&](Level lv) {
        std::vector<Eigen::Triplet<double>> trips;
        for (int i : active_nodes(mesh, lv, bc)) trips.emplace_back(i, i, 1.0);
        SparseMatrix B(mesh.num_nodes(lv), mesh.num_nodes(lv));
        B.setFromTriplets(trips.begin(), trips.end());
        return B;
    };
    return {diag_mask(Level::Coarse), diag_mask(Level::Fine)};
}

SparseMatrix vertex_map(const SparseMatrix& P_h) {
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < P_h.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(P_h, i); it; ++it)
            if (it.value() == 1.0) trips.emplace_back(it.row(), it.col(), 1.0);
    SparseMatrix V(P_h.rows(), P_h.cols());
    V.setFromTriplets(trips.begin(), trips.end());
    return V;
}

SparseMatrix constraint_matrix(const SparseMatrix& P_h, const SparseMatrix& M_h) {
    if (P_h.cols() != M_h.rows())
        throw std::invalid_argument("constraint_matrix: dimension mismatch");
    return P_h * M_h;
}

Vector load_vector(const TwoScaleMesh& mesh, const ScalarField2D& f) {
    Vector out = Vector::Zero(mesh.num_nodes(Level::Fine));
    const double cell_quarter = 0.25 * mesh.hx(Level::Fine) * mesh.hy(Level::Fine);
    for (int t = 0; t < mesh.num_cells(Level::Fine); ++t) {
        const auto [mx, my] = mesh.cell_midpoint(Level::Fine, t);
        const double fv = f(mx, my) * cell_quarter;
        for (int m = 0; m < 4; ++m) out[mesh.sigma(Level::Fine, t, m)] += fv;
    }
    return out;
}

Vector neumann_load(const TwoScaleMesh& mesh, const ScalarField2D& q, const BoundarySpec& bc) {
    Vector out = Vector::Zero(mesh.num_nodes(Level::Fine));
    const int nxh = mesh.nx(Level::Fine);
    const int nyh = mesh.ny(Level::Fine);
    const double hx = mesh.hx(Level::Fine);
    const double hy = mesh.hy(Level::Fine);
    const DomainRect& d = mesh.domain();
    auto add_edge = [&](int n0, int n1, double mx, double my, double len) {
        const double v = q(mx, my) * 0.5 * len;
        out[n0] += v;
        out[n1] += v;
    };
    if (bc.left == BcType::Neumann)
        for (int y = 0; y < nyh; ++y)
            add_edge(mesh.node_index(Level::Fine, 0, y), mesh.node_index(Level::Fine, 0, y + 1),
                     d.x0, d.y0 + (y + 0.5) * hy, hy);
    if (bc.right == BcType::Neumann)
        for (int y = 0; y < nyh; ++y)
            add_edge(mesh.node_index(Level::Fine, nxh, y),
                     mesh.node_index(Level::Fine, nxh, y + 1), d.x1, d.y0 + (y + 0.5) * hy, hy);
    if (bc.bottom == BcType::Neumann)
        for (int x = 0; x < nxh; ++x)
            add_edge(mesh.node_index(Level::Fine, x, 0), mesh.node_index(Level::Fine, x + 1, 0),
                     d.x0 + (x + 0.5) * hx, d.y0, hx);
    if (bc.top == BcType::Neumann)
        for (int x = 0; x < nxh; ++x)
            add_edge(mesh.node_index(Level::Fine, x, nyh),
                     mesh.node_index(Level::Fine, x + 1, nyh), d.x0 + (x + 0.5) * hx, d.y1, hx);
    return out;
}

std::pair<Vector, Vector> dirichlet_extension(const TwoScaleMesh& mesh, const ScalarField2D& g,
                                              const BoundarySpec& bc) {
    Vector g_H = Vector::Zero(mesh.num_nodes(Level::Coarse));
    for (int i = 0; i < mesh.num_nodes(Level::Coarse); ++i)
        if (mesh.classify_node(Level::Coarse, i, bc) == NodeClass::Dirichlet) {
            const auto [x, y] = mesh.node_position(Level::Coarse, i);
            g_H[i] = g(x, y);
        }
    Vector g_h = projection_matrix(mesh).transpose() * g_H;
    for (int j = 0; j < mesh.num_nodes(Level::Fine); ++j)
        if (mesh.classify_node(Level::Fine, j, bc) == NodeClass::Dirichlet) {
            const auto [x, y] = mesh.node_position(Level::Fine, j);
            g_h[j] = g(x, y);
        }
    return {std::move(g_H), std::move(g_h)};
}

double quartic_integral(const TwoScaleMesh& mesh, const Vector& v) {
    double total = 0.0;
    for_each_gauss_point(mesh, 4, [&](int t, const double N[4], double wq) {
        double val = 0.0;
        for (int m = 0; m < 4; ++m) val += v[mesh.sigma(Level::Fine, t, m)] * N[m];
        total += wq * val * val * val * val;
    });
    return total;
}

Vector cubic_load(const TwoScaleMesh& mesh, const Vector& v) {
    Vector out = Vector::Zero(mesh.num_nodes(Level::Fine));
    for_each_gauss_point(mesh, 4, [&](int t, const double N[4], double wq) {
        int gi[4];
        for (int m = 0; m < 4; ++m) gi[m] = mesh.sigma(Level::Fine, t, m);
        double val = 0.0;
        for (int m = 0; m < 4; ++m) val += v[gi[m]] * N[m];
        const double cube = val * val * val;
        for (int m = 0; m < 4; ++m) out[gi[m]] += wq * cube * N[m];
    });
    return out;
}

AssembledForms assemble_forms(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                              const CoefficientField& kappa,
                              const std::optional<PotentialField>& V) {
    AssembledForms forms;
    forms.A_h = assemble_stiffness(mesh, kappa);
    forms.M_h = assemble_mass(mesh, Level::Fine);
    if (V) {
        V->validate(mesh);
        forms.M_Vh = assemble_weighted_mass(mesh, V->values);
    } else {
        forms.M_Vh = SparseMatrix(forms.M_h.rows(), forms.M_h.cols());
    }
    forms.P_h = projection_matrix(mesh);
    forms.C_h = constraint_matrix(forms.P_h, forms.M_h);
    std::tie(forms.B_H, forms.B_h) = boundary_masks(mesh, bc);
    forms.active_coarse = active_nodes(mesh, Level::Coarse, bc);
    forms.active_fine = active_nodes(mesh, Level::Fine, bc);
    return forms;
}

}  // namespace lod
