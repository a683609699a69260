#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "lod/lod_solve.hpp"

using namespace lod;

namespace {

const DomainRect unit{0.0, 0.0, 1.0, 1.0};
const BoundarySpec dir = BoundarySpec::all_dirichlet();

CoefficientField striped_kappa(const TwoScaleMesh& mesh, double contrast) {
    CoefficientField kappa;
    kappa.values.resize(mesh.num_cells(Level::Fine));
    for (int t = 0; t < mesh.num_cells(Level::Fine); ++t) {
        const auto [cx, cy] = mesh.cell_coords(Level::Fine, t);
        kappa.values[t] = (cx + 2 * cy) % 3 == 0 ? contrast : 1.0;
    }
    return kappa;
}

double bump(double x, double y) { return x * (1.0 - x) + std::cos(3.0 * y); }

// Projection of y onto ker(C restricted to the active sets), dense.
Vector kernel_member(const AssembledForms& forms, unsigned seed) {
    const SparseMatrix C =
        gather_submatrix(forms.C_h, forms.active_coarse, forms.active_fine);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Vector y(C.cols());
    for (int i = 0; i < y.size(); ++i) y[i] = gauss(rng);
    const DenseMatrix Cd(C);
    const Vector z = y - Cd.transpose() * (Cd * Cd.transpose()).ldlt().solve(Cd * y);
    Vector full = Vector::Zero(forms.C_h.cols());
    scatter_add(full, z, forms.active_fine);
    return full;
}

}  // namespace

TEST_CASE("refine one collapses to the fine method") {
    const TwoScaleMesh mesh = build_mesh(unit, 8, 8, 1);
    const CoefficientField kappa = striped_kappa(mesh, 10.0);
    const AssembledForms forms = assemble_forms(mesh, dir, kappa);
    const CorrectorResult corr = compute_corrections(mesh, dir, kappa, 2);
    const Vector f_h = load_vector(mesh, bump);
    const LODSolution sol = solve_lod(build_lod_system(forms, corr.Q_h, f_h));
    const Vector ref = solve_fine_reference(mesh, dir, forms, bump, nullptr, nullptr);
    CHECK((sol.u_h - ref).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("zero corrector gives the plain coarse system") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 2);
    const AssembledForms forms = assemble_forms(mesh, dir, CoefficientField::constant(mesh, 1.0));
    const SparseMatrix Q0(forms.P_h.rows(), forms.P_h.cols());
    const SparseMatrix A_lod = assemble_lod(forms.A_h, forms.P_h, Q0, forms.B_H);
    const SparseMatrix PAP = forms.B_H * SparseMatrix(forms.P_h * forms.A_h *
                                                      SparseMatrix(forms.P_h.transpose())) *
                             forms.B_H;
    CHECK((DenseMatrix(A_lod) - DenseMatrix(PAP)).cwiseAbs().maxCoeff() <= 1e-13);

    const Vector f_h = load_vector(mesh, bump);
    const Vector r1 = lod_rhs(f_h, forms.P_h, Q0, forms.B_H, RhsMode::Corrected);
    const Vector r2 = lod_rhs(f_h, forms.P_h, Q0, forms.B_H, RhsMode::Plain);
    CHECK((r1 - r2).cwiseAbs().maxCoeff() == 0.0);

    const LODSolution zero = solve_lod(build_lod_system(forms, Q0, Vector::Zero(f_h.size())));
    CHECK(zero.u_h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corrected space properties with full patches") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 4);
    const CoefficientField kappa = striped_kappa(mesh, 50.0);
    const AssembledForms forms = assemble_forms(mesh, dir, kappa);
    const CorrectorResult corr = compute_corrections(mesh, dir, kappa, 4, 2);
    const SparseMatrix PQ = forms.P_h + corr.Q_h;

    // Corrected basis functions are A-orthogonal to the constraint kernel.
    const double a_norm = DenseMatrix(forms.A_h).cwiseAbs().rowwise().sum().maxCoeff();
    for (unsigned seed : {1u, 2u, 3u}) {
        const Vector z = kernel_member(forms, seed);
        const Vector t = forms.B_H * Vector(PQ * (forms.A_h * z));
        CHECK(t.cwiseAbs().maxCoeff() <= 1e-8 * a_norm * z.cwiseAbs().maxCoeff());
    }

    // Galerkin solution reproduces the coarse scales of the fine solution.
    const Vector f_h = load_vector(mesh, bump);
    const LODSolution sol = solve_lod(build_lod_system(forms, corr.Q_h, f_h));
    const Vector ref = solve_fine_reference(mesh, dir, forms, bump, nullptr, nullptr);
    const Vector gap = forms.B_H * Vector(forms.C_h * (ref - sol.u_h));
    CHECK(gap.cwiseAbs().maxCoeff() <= 1e-8 * ref.cwiseAbs().maxCoeff());

    // Corrections never increase the energy of a coarse function.
    const SparseMatrix A_lod = assemble_lod(forms.A_h, forms.P_h, corr.Q_h, forms.B_H);
    const SparseMatrix A_c = assemble_lod(forms.A_h, forms.P_h,
                                          SparseMatrix(forms.P_h.rows(), forms.P_h.cols()),
                                          forms.B_H);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 5; ++trial) {
        Vector x(A_lod.rows());
        for (int i = 0; i < x.size(); ++i) x[i] = gauss(rng);
        CHECK(x.dot(A_lod * x) <= x.dot(A_c * x) + 1e-10);
    }

    // The Petrov-Galerkin matrix coincides with the symmetric one here.
    PGOptions pg_opts;
    pg_opts.k = 4;
    pg_opts.threads = 2;
    const PGResult pg = pg_assemble_and_solve(mesh, dir, kappa, f_h, pg_opts);
    CHECK((DenseMatrix(pg.A_pg) - DenseMatrix(A_lod)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("petrov-galerkin determinism across thread counts") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 2);
    const CoefficientField kappa = striped_kappa(mesh, 100.0);
    const Vector f_h = load_vector(mesh, bump);
    PGOptions one, four;
    one.k = four.k = 1;
    one.threads = 1;
    four.threads = 4;
    const PGResult r1 = pg_assemble_and_solve(mesh, dir, kappa, f_h, one);
    const PGResult r4 = pg_assemble_and_solve(mesh, dir, kappa, f_h, four);
    CHECK((DenseMatrix(r1.A_pg) - DenseMatrix(r4.A_pg)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r1.u_H - r4.u_H).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("boundary value pipeline reductions") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 2);
    const CoefficientField kappa = striped_kappa(mesh, 10.0);
    const AssembledForms forms = assemble_forms(mesh, dir, kappa);

    // Homogeneous data: the pipeline is exactly the plain solve.
    BvpConfig plain;
    plain.f = bump;
    plain.k = 2;
    const BvpResult b = solve_bvp(mesh, dir, kappa, plain);
    CHECK(b.q_hat.cwiseAbs().maxCoeff() == 0.0);
    const CorrectorResult corr = compute_corrections(mesh, dir, kappa, 2);
    const LODSolution sol =
        solve_lod(build_lod_system(forms, corr.Q_h, load_vector(mesh, bump)));
    CHECK((b.u_h - sol.u_h).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((b.u_H - sol.u_H).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("boundary value problem at refine one matches the fine method") {
    const TwoScaleMesh mesh = build_mesh(unit, 8, 8, 1);
    const CoefficientField kappa = striped_kappa(mesh, 4.0);
    const AssembledForms forms = assemble_forms(mesh, dir, kappa);
    const auto g = [](double x, double y) { return x - y; };
    BvpConfig cfg;
    cfg.f = bump;
    cfg.g = g;
    cfg.k = 2;
    const BvpResult b = solve_bvp(mesh, dir, kappa, cfg);
    const Vector ref = solve_fine_reference(mesh, dir, forms, bump, g, nullptr);
    CHECK((b.u_h - ref).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("mixed boundary data with full patches reproduces the fine solve") {
    BoundarySpec mixed;  // left Neumann, rest Dirichlet
    mixed.left = BcType::Neumann;
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 2);
    const CoefficientField kappa = CoefficientField::constant(mesh, 1.0);
    const AssembledForms forms = assemble_forms(mesh, mixed, kappa);

    // u = x*y: harmonic, with conormal derivative -y on the left side.
    const auto g = [](double x, double y) { return x * y; };
    const auto q = [](double, double y) { return -y; };
    BvpConfig cfg;
    cfg.g = g;
    cfg.q = q;
    cfg.k = 4;
    const BvpResult b = solve_bvp(mesh, mixed, kappa, cfg);
    const Vector ref = solve_fine_reference(mesh, mixed, forms, nullptr, g, q);
    CHECK((b.u_h - ref).cwiseAbs().maxCoeff() <= 1e-8);
    // The discrete solution is close to the exact bilinear one.
    double worst = 0.0;
    for (int i = 0; i < mesh.num_nodes(Level::Fine); ++i) {
        const auto p = mesh.node_position(Level::Fine, i);
        worst = std::max(worst, std::abs(b.u_h[i] - p[0] * p[1]));
    }
    CHECK(worst <= 5e-3);

    // Total-source mode with full patches gives the same physical solution.
    BvpConfig total = cfg;
    total.f = bump;
    total.source_mode = SourceMode::Total;
    BvpConfig boundary = cfg;
    boundary.f = bump;
    const BvpResult bt = solve_bvp(mesh, mixed, kappa, total);
    const BvpResult bb = solve_bvp(mesh, mixed, kappa, boundary);
    const Vector ref2 = solve_fine_reference(mesh, mixed, forms, bump, g, q);
    CHECK((bt.u_h - ref2).cwiseAbs().maxCoeff() <= 1e-8);
    // Boundary mode drops the fine scales of the volume load but keeps the
    // coarse scales of the solution.
    const Vector gap = forms.B_H * Vector(forms.C_h * (bb.u_h - ref2));
    CHECK(gap.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("disabling source correctors changes only the fine scales") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 2);
    const CoefficientField kappa = striped_kappa(mesh, 10.0);
    const auto g = [](double x, double y) { return x + y; };
    BvpConfig with;
    with.g = g;
    with.k = 4;
    BvpConfig without = with;
    without.source_correctors = false;
    const BvpResult a = solve_bvp(mesh, dir, kappa, with);
    const BvpResult b = solve_bvp(mesh, dir, kappa, without);
    CHECK(a.q_hat.cwiseAbs().maxCoeff() > 0.0);
    CHECK(b.q_hat.cwiseAbs().maxCoeff() == 0.0);
    // Both honor the boundary data exactly.
    for (int i = 0; i < mesh.num_nodes(Level::Fine); ++i)
        if (mesh.classify_node(Level::Fine, i, dir) == NodeClass::Dirichlet) {
            const auto p = mesh.node_position(Level::Fine, i);
            CHECK(a.u_h[i] == doctest::Approx(g(p[0], p[1])).epsilon(1e-12));
            CHECK(b.u_h[i] == doctest::Approx(g(p[0], p[1])).epsilon(1e-12));
        }
}
