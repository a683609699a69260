#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "lod/eigen_lod.hpp"

using namespace lod;

namespace {

const DomainRect unit{0.0, 0.0, 1.0, 1.0};
const BoundarySpec dir = BoundarySpec::all_dirichlet();

// Independent 3x3 Gauss assembly of the rho-weighted mass matrix for
// rho = sum_i w_i v_i^2, bilinear shape functions on each fine cell.
SparseMatrix brute_force_density_mass(const TwoScaleMesh& mesh,
                                      const std::vector<std::pair<double, Vector>>& density) {
    const double gp[3] = {-std::sqrt(3.0 / 5.0), 0.0, std::sqrt(3.0 / 5.0)};
    const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    const double hx = mesh.hx(Level::Fine), hy = mesh.hy(Level::Fine);
    const int n = mesh.num_nodes(Level::Fine);
    DenseMatrix M = DenseMatrix::Zero(n, n);
    for (int t = 0; t < mesh.num_cells(Level::Fine); ++t) {
        int g[4];
        for (int m = 0; m < 4; ++m) g[m] = mesh.sigma(Level::Fine, t, m);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                const double xi = gp[a], eta = gp[b];
                const double N[4] = {0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
                                     0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
                double rho = 0.0;
                for (const auto& [w, v] : density) {
                    double val = 0.0;
                    for (int m = 0; m < 4; ++m) val += N[m] * v[g[m]];
                    rho += w * val * val;
                }
                const double scale = gw[a] * gw[b] * rho * hx * hy / 4.0;
                for (int m = 0; m < 4; ++m)
                    for (int p = 0; p < 4; ++p) M(g[m], g[p]) += scale * N[m] * N[p];
            }
    }
    return M.sparseView();
}

}  // namespace

TEST_CASE("restricted pencil solve") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 2);
    const AssembledForms forms = assemble_forms(mesh, dir, CoefficientField::constant(mesh, 1.0));
    EigOptions opts;
    opts.n_ev = 2;
    const EigResult r = restricted_eig(forms.A_h, forms.M_h, forms.active_fine, opts);
    // Scattered vectors vanish on Dirichlet nodes.
    std::vector<bool> active(mesh.num_nodes(Level::Fine), false);
    for (int i : forms.active_fine) active[i] = true;
    for (int i = 0; i < mesh.num_nodes(Level::Fine); ++i)
        if (!active[i])
            for (int j = 0; j < 2; ++j) CHECK(r.vectors(i, j) == 0.0);
    // Same eigenvalues as the explicitly gathered pencil.
    const EigResult g = generalized_eig_smallest(
        gather_submatrix(forms.A_h, forms.active_fine, forms.active_fine),
        gather_submatrix(forms.M_h, forms.active_fine, forms.active_fine), opts);
    CHECK((r.lambdas - g.lambdas).cwiseAbs().maxCoeff() <= 1e-10 * g.lambdas[1]);
}

TEST_CASE("corrected mass with zero corrector") {
    const TwoScaleMesh mesh = build_mesh(unit, 3, 3, 2);
    const AssembledForms forms = assemble_forms(mesh, dir, CoefficientField::constant(mesh, 1.0));
    const SparseMatrix Q0(forms.P_h.rows(), forms.P_h.cols());
    const SparseMatrix M_lod = lod_mass(forms.M_h, forms.P_h, Q0, forms.B_H);
    const SparseMatrix PMP = forms.B_H * SparseMatrix(forms.P_h * forms.M_h *
                                                      SparseMatrix(forms.P_h.transpose())) *
                             forms.B_H;
    CHECK((DenseMatrix(M_lod) - DenseMatrix(PMP)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("eigenvalue problem collapses at refine one") {
    const TwoScaleMesh mesh = build_mesh(unit, 6, 6, 1);
    const CoefficientField kappa = CoefficientField::constant(mesh, 1.0);
    const AssembledForms forms = assemble_forms(mesh, dir, kappa);
    EvpConfig cfg;
    cfg.k = 2;
    cfg.n_ev = 3;
    const EvpResult lod = solve_linear_evp(mesh, dir, kappa, std::nullopt, cfg);
    EigOptions opts;
    opts.n_ev = 3;
    const EigResult fine = restricted_eig(forms.A_h, forms.M_h, forms.active_fine, opts);
    CHECK((lod.lambdas - fine.lambdas).cwiseAbs().maxCoeff() <= 1e-8 * fine.lambdas[2]);
    // Prolonged eigenvectors are L2-normalized.
    for (int j = 0; j < 3; ++j)
        CHECK(lod.u_h.col(j).dot(forms.M_h * lod.u_h.col(j)) ==
              doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("coarse eigenvalues bound the fine ones from above") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 4);
    const CoefficientField kappa = CoefficientField::constant(mesh, 1.0);
    const AssembledForms forms = assemble_forms(mesh, dir, kappa);
    EvpConfig cfg;
    cfg.k = 4;
    cfg.n_ev = 2;
    const EvpResult lod = solve_linear_evp(mesh, dir, kappa, std::nullopt, cfg);
    EigOptions opts;
    opts.n_ev = 2;
    const EigResult fine = restricted_eig(forms.A_h, forms.M_h, forms.active_fine, opts);
    for (int j = 0; j < 2; ++j) CHECK(lod.lambdas[j] >= fine.lambdas[j] - 1e-10);
    // Full patches make the corrected space nearly optimal.
    CHECK(lod.lambdas[0] - fine.lambdas[0] <= 1e-2 * fine.lambdas[0]);

    // Post-processing an exact fine pair is a fixed point.
    const auto [lam, u] =
        post_process(fine.lambdas[0], fine.vectors.col(0), forms.A_h, forms.M_h,
                     forms.active_fine);
    CHECK(lam == doctest::Approx(fine.lambdas[0]).epsilon(1e-10));
    // Post-processing the coarse pair moves it toward the fine one.
    const auto [lam2, u2] =
        post_process(lod.lambdas[0], lod.u_h.col(0), forms.A_h, forms.M_h, forms.active_fine);
    CHECK(std::abs(lam2 - fine.lambdas[0]) <= std::abs(lod.lambdas[0] - fine.lambdas[0]) + 1e-12);
}

TEST_CASE("density-weighted mass against a brute-force quadrature") {
    const TwoScaleMesh mesh = build_mesh(unit, 2, 2, 2);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    std::vector<std::pair<double, Vector>> density;
    Vector v1(mesh.num_nodes(Level::Fine)), v2(mesh.num_nodes(Level::Fine));
    for (int i = 0; i < v1.size(); ++i) {
        v1[i] = gauss(rng);
        v2[i] = gauss(rng);
    }
    density.push_back({0.3, v1});
    density.push_back({0.7, v2});
    const SparseMatrix M = assemble_density_weighted_mass(mesh, density);
    const SparseMatrix ref = brute_force_density_mass(mesh, density);
    CHECK((DenseMatrix(M) - DenseMatrix(ref)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("energy functional") {
    const TwoScaleMesh mesh = build_mesh(unit, 3, 3, 2);
    const AssembledForms forms = assemble_forms(mesh, dir, CoefficientField::constant(mesh, 1.0));
    const Vector ones = Vector::Ones(mesh.num_nodes(Level::Fine));
    CHECK(energy(mesh, ones, forms.A_h, forms.M_Vh, 4.0) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(energy(mesh, ones, forms.A_h, forms.M_Vh, 0.0) == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("damping iteration with zero interaction is the linear solve") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 2);
    const CoefficientField kappa = CoefficientField::constant(mesh, 1.0);
    const GpeSetup setup = gpe_setup(mesh, dir, kappa, std::nullopt, 0.0, 4);
    const GpeRun run = gpe_solve(setup, 1e-10, 100);
    CHECK(run.state.converged);

    EvpConfig cfg;
    cfg.k = 4;
    cfg.n_ev = 1;
    const EvpResult lin = solve_linear_evp(mesh, dir, kappa, std::nullopt, cfg);
    CHECK(run.state.lambda_val == doctest::Approx(lin.lambdas[0]).epsilon(1e-8));
    const AssembledForms& forms = setup.forms;
    const double align =
        std::abs(run.state.u_fine.dot(forms.M_h * Vector(lin.u_h.col(0))));
    CHECK(align == doctest::Approx(1.0).epsilon(1e-6));

    // Post-processing reduces to the linear two-grid step.
    const auto [lam_gpe, u_gpe] = gpe_post_process(run.state, setup);
    const auto [lam_lin, u_lin] = post_process(run.state.lambda_val, run.state.u_fine,
                                               forms.A_h, forms.M_h, forms.active_fine);
    CHECK(lam_gpe == doctest::Approx(lam_lin).epsilon(1e-10));
}

TEST_CASE("damping iteration with interaction") {
    const TwoScaleMesh mesh = build_mesh(unit, 4, 4, 2);
    const CoefficientField kappa = CoefficientField::constant(mesh, 1.0);
    const double beta = 50.0;
    const GpeSetup setup = gpe_setup(mesh, dir, kappa, std::nullopt, beta, 4);
    const GpeRun run = gpe_solve(setup, 1e-11, 200);
    CHECK(run.state.converged);

    // Energies decrease monotonically.
    for (size_t i = 1; i < run.energy_history.size(); ++i)
        CHECK(run.energy_history[i] <= run.energy_history[i - 1] + 1e-12);

    // Iterates stay L2-normalized with nonnegative mean.
    const AssembledForms& forms = setup.forms;
    CHECK(run.state.u_fine.dot(forms.M_h * run.state.u_fine) ==
          doctest::Approx(1.0).epsilon(1e-10));
    CHECK(Vector::Ones(run.state.u_fine.size()).dot(forms.M_h * run.state.u_fine) >= 0.0);

    // lambda = 2E + beta/2 * int u^4 links the converged quantities.
    const auto [lam, u] = gpe_post_process(run.state, setup);
    const double E = energy(mesh, u, forms.A_h, forms.M_Vh, beta);
    const double quart = quartic_integral(mesh, u);
    CHECK(lam == doctest::Approx(2.0 * E + 0.5 * beta * quart).epsilon(1e-9));
    // Same identity for the coarse-space minimizer.
    const double E_H = energy(mesh, run.state.u_fine, forms.A_h, forms.M_Vh, beta);
    const double quart_H = quartic_integral(mesh, run.state.u_fine);
    CHECK(run.state.lambda_val ==
          doctest::Approx(2.0 * E_H + 0.5 * beta * quart_H).epsilon(1e-7));
    // Post-processing does not raise the eigenvalue approximation.
    CHECK(lam <= run.state.lambda_val + 1e-10);

    // The interaction raises the ground-state energy above the linear one.
    const GpeSetup lin_setup = gpe_setup(mesh, dir, kappa, std::nullopt, 0.0, 4);
    const GpeRun lin_run = gpe_solve(lin_setup, 1e-10, 100);
    CHECK(run.state.E_val > lin_run.state.E_val);
}
