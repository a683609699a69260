#include "lod/eigen_lod.hpp"

#include <cmath>
#include <stdexcept>

namespace lod {

namespace {

SparseMatrix unit_diag_on_inactive(const SparseMatrix& A, const std::vector<int>& active) {
    std::vector<char> flag(A.rows(), 0);
    for (int i : active) flag[i] = 1;
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < static_cast<int>(flag.size()); ++i)
        if (!flag[i]) trips.emplace_back(i, i, 1.0);
    SparseMatrix D(A.rows(), A.cols());
    D.setFromTriplets(trips.begin(), trips.end());
    return A + D;
}

void sign_normalize(Vector& u_H, Vector& u_fine, const SparseMatrix& M_h) {
    const double mean = (M_h * u_fine).sum();
    if (mean < 0.0) {
        u_H = -u_H;
        u_fine = -u_fine;
    }
}

}  // namespace

SparseMatrix lod_mass(const SparseMatrix& M_h, const SparseMatrix& P_h, const SparseMatrix& Q_h,
                      const SparseMatrix& B_H) {
    const SparseMatrix PQ = P_h + Q_h;
    return B_H * SparseMatrix(PQ * SparseMatrix(M_h * PQ.transpose())) * B_H;
}

EigResult restricted_eig(const SparseMatrix& A, const SparseMatrix& M,
                         const std::vector<int>& active, const EigOptions& opts) {
    const SparseMatrix A_r = gather_submatrix(A, active, active);
    const SparseMatrix M_r = gather_submatrix(M, active, active);
    EigResult inner = generalized_eig_smallest(A_r, M_r, opts);
    EigResult out;
    out.lambdas = inner.lambdas;
    out.vectors = DenseMatrix::Zero(A.rows(), inner.vectors.cols());
    for (int j = 0; j < inner.vectors.cols(); ++j)
        for (int i = 0; i < static_cast<int>(active.size()); ++i)
            out.vectors(active[i], j) = inner.vectors(i, j);
    return out;
}

EvpResult solve_linear_evp(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                           const CoefficientField& kappa, const std::optional<PotentialField>& V,
                           const EvpConfig& config) {
    const AssembledForms forms = assemble_forms(mesh, bc, kappa, V);
    const SparseMatrix A_op = forms.A_h + forms.M_Vh;
    CorrectorOptions copts;
    copts.k = config.k;
    copts.threads = config.threads;
    const CorrectorResult corr = compute_corrections(
        mesh, bc, operator_blocks(mesh, kappa, V), A_op, forms.C_h, forms.P_h, copts);

    const SparseMatrix A_lod = assemble_lod(A_op, forms.P_h, corr.Q_h, forms.B_H);
    const SparseMatrix M_lod = lod_mass(forms.M_h, forms.P_h, corr.Q_h, forms.B_H);

    EigOptions eopts;
    eopts.n_ev = config.n_ev;
    eopts.tol = config.tol;
    eopts.max_iter = config.max_iter;
    const EigResult eig = restricted_eig(A_lod, M_lod, forms.active_coarse, eopts);

    EvpResult out;
    out.lambdas = eig.lambdas;
    out.u_H = eig.vectors;
    const SparseMatrix PQ = forms.P_h + corr.Q_h;
    out.u_h = PQ.transpose() * out.u_H;
    for (int j = 0; j < out.u_h.cols(); ++j) {
        const Vector col = out.u_h.col(j);
        const double nrm = std::sqrt(col.dot(forms.M_h * col));
        out.u_h.col(j) /= nrm;
        out.u_H.col(j) /= nrm;
    }
    return out;
}

std::pair<double, Vector> post_process(double lambda_H, const Vector& u_lod,
                                       const SparseMatrix& A_op, const SparseMatrix& M_h,
                                       const std::vector<int>& active_fine) {
    Vector rhs = lambda_H * (M_h * u_lod);
    std::vector<char> flag(A_op.rows(), 0);
    for (int i : active_fine) flag[i] = 1;
    for (int i = 0; i < rhs.size(); ++i)
        if (!flag[i]) rhs[i] = 0.0;

    SparseMatrix A_masked = A_op;
    // Zero Dirichlet rows/cols, then unit diagonal.
    {
        std::vector<Eigen::Triplet<double>> trips;
        for (int i = 0; i < A_op.outerSize(); ++i)
            for (SparseMatrix::InnerIterator it(A_op, i); it; ++it)
                if (flag[it.row()] && flag[it.col()])
                    trips.emplace_back(it.row(), it.col(), it.value());
        A_masked = SparseMatrix(A_op.rows(), A_op.cols());
        A_masked.setFromTriplets(trips.begin(), trips.end());
        A_masked = unit_diag_on_inactive(A_masked, active_fine);
    }
    SpdFactorization fact(A_masked);
    Vector u_post = fact.solve(rhs);
    const double denom = u_post.dot(M_h * u_post);
    if (!(denom > 0.0)) throw std::runtime_error("post_process: degenerate post-processed vector");
    const double lambda_post = u_post.dot(A_op * u_post) / denom;
    u_post /= std::sqrt(denom);
    return {lambda_post, u_post};
}

double energy(const TwoScaleMesh& mesh, const Vector& v, const SparseMatrix& A_h,
              const SparseMatrix& M_Vh, double beta) {
    double e = 0.5 * (v.dot(A_h * v) + v.dot(M_Vh * v));
    if (beta != 0.0) e += 0.25 * beta * quartic_integral(mesh, v);
    return e;
}

GpeSetup gpe_setup(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                   const CoefficientField& kappa, const std::optional<PotentialField>& V,
                   double beta, int k, int threads) {
    if (beta < 0.0) throw std::invalid_argument("gpe_setup: beta must be nonnegative");
    GpeSetup s{mesh, bc, beta, {}, {}, {}, {}, {}, {}};
    s.forms = assemble_forms(mesh, bc, kappa, V);
    const SparseMatrix A_op = s.forms.A_h + s.forms.M_Vh;
    CorrectorOptions copts;
    copts.k = k;
    copts.threads = threads;
    const CorrectorResult corr = compute_corrections(
        mesh, bc, operator_blocks(mesh, kappa, V), A_op, s.forms.C_h, s.forms.P_h, copts);
    s.Q_h = corr.Q_h;
    s.A_lod = assemble_lod(A_op, s.forms.P_h, s.Q_h, s.forms.B_H);
    s.M_lod = lod_mass(s.forms.M_h, s.forms.P_h, s.Q_h, s.forms.B_H);
    s.PQ = s.forms.P_h + s.Q_h;
    return s;
}

namespace {

// Ground state of (A_lod + beta * corrected density mass, M_lod).
void gpe_ground_state(const GpeSetup& setup,
                      const std::vector<std::pair<double, Vector>>* density, Vector& u_H,
                      Vector& u_fine) {
    SparseMatrix A_step = setup.A_lod;
    if (density && setup.beta != 0.0) {
        const SparseMatrix M_rho = assemble_density_weighted_mass(setup.mesh, *density);
        A_step = A_step + SparseMatrix(setup.beta * assemble_lod(M_rho, setup.forms.P_h,
                                                                  setup.Q_h, setup.forms.B_H));
    }
    const EigResult eig =
        restricted_eig(A_step, setup.M_lod, setup.forms.active_coarse, setup.eig);
    u_H = eig.vectors.col(0);
    u_fine = setup.PQ.transpose() * u_H;
    // M_lod-normalization of u_H already makes u_fine L2-normalized; tighten.
    const double nrm = std::sqrt(u_fine.dot(setup.forms.M_h * u_fine));
    u_H /= nrm;
    u_fine /= nrm;
    sign_normalize(u_H, u_fine, setup.forms.M_h);
}

}  // namespace

ODAState gpe_initial_step(const GpeSetup& setup) {
    ODAState st;
    gpe_ground_state(setup, nullptr, st.u_H, st.u_fine);
    const SparseMatrix A_op = setup.forms.A_h + setup.forms.M_Vh;
    st.B_val = st.u_fine.dot(A_op * st.u_fine);
    st.density = {{1.0, st.u_fine}};
    const double quart = quartic_integral(setup.mesh, st.u_fine);
    st.d_val = st.B_val + setup.beta * quart;
    st.E_val = 0.5 * (st.B_val + st.d_val);
    st.lambda_val = st.d_val;  // rho^(0) is the iterate's own density
    return st;
}

ODAState gpe_oda_iterate(const ODAState& state, const GpeSetup& setup, double delta_tol) {
    ODAState next;
    next.nu = state.nu + 1;

    const SparseMatrix M_rho =
        setup.beta != 0.0 ? assemble_density_weighted_mass(setup.mesh, state.density)
                          : SparseMatrix(setup.forms.M_h.rows(), setup.forms.M_h.cols());
    gpe_ground_state(setup, &state.density, next.u_H, next.u_fine);

    const SparseMatrix A_op = setup.forms.A_h + setup.forms.M_Vh;
    const double B_half = next.u_fine.dot(A_op * next.u_fine);
    const double pair_prev =
        setup.beta != 0.0 ? next.u_fine.dot(M_rho * next.u_fine) : 0.0;
    const double d_half = B_half + setup.beta * pair_prev;
    const double lambda = B_half + setup.beta * quartic_integral(setup.mesh, next.u_fine);

    const double s = d_half - state.d_val;
    const double c = state.d_val + lambda - 2.0 * d_half + B_half - state.B_val;
    double alpha;
    if (c > 0.0) {
        alpha = std::min(1.0, std::max(0.0, -s / c));
    } else {
        alpha = (s + 0.5 * c < 0.0) ? 1.0 : 0.0;  // endpoint minimizer
    }

    next.s_val = s;
    next.c_val = c;
    next.alpha = alpha;
    next.lambda_val = lambda;
    next.E_val = 0.5 * (state.B_val + state.d_val) + alpha * s + 0.5 * alpha * alpha * c;

    next.density.reserve(state.density.size() + 1);
    for (const auto& [w, u] : state.density)
        if (w * (1.0 - alpha) > 0.0) next.density.emplace_back(w * (1.0 - alpha), u);
    if (alpha > 0.0) next.density.emplace_back(alpha, next.u_fine);
    if (next.density.empty()) next.density = state.density;

    next.B_val = (1.0 - alpha) * state.B_val + alpha * B_half;
    next.d_val = 2.0 * next.E_val - next.B_val;
    next.converged = std::abs(s) <= delta_tol * std::abs(next.E_val);
    return next;
}

GpeRun gpe_solve(const GpeSetup& setup, double delta_tol, int max_iter) {
    GpeRun run;
    run.state = gpe_initial_step(setup);
    run.energy_history.push_back(run.state.E_val);
    for (int it = 0; it < max_iter; ++it) {
        run.state = gpe_oda_iterate(run.state, setup, delta_tol);
        ++run.iterations;
        run.energy_history.push_back(run.state.E_val);
        if (run.state.converged) return run;
    }
    throw std::runtime_error("gpe_solve: damping iteration did not converge within " +
                             std::to_string(max_iter) + " steps; last |s/E| = " +
                             std::to_string(std::abs(run.state.s_val / run.state.E_val)));
}

std::pair<double, Vector> gpe_post_process(const ODAState& state, const GpeSetup& setup) {
    const SparseMatrix A_op = setup.forms.A_h + setup.forms.M_Vh;
    Vector rhs = state.lambda_val * (setup.forms.M_h * state.u_fine);
    if (setup.beta != 0.0) rhs -= setup.beta * cubic_load(setup.mesh, state.u_fine);

    std::vector<char> flag(A_op.rows(), 0);
    for (int i : setup.forms.active_fine) flag[i] = 1;
    for (int i = 0; i < rhs.size(); ++i)
        if (!flag[i]) rhs[i] = 0.0;

    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < A_op.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(A_op, i); it; ++it)
            if (flag[it.row()] && flag[it.col()])
                trips.emplace_back(it.row(), it.col(), it.value());
    SparseMatrix A_masked(A_op.rows(), A_op.cols());
    A_masked.setFromTriplets(trips.begin(), trips.end());
    A_masked = unit_diag_on_inactive(A_masked, setup.forms.active_fine);

    SpdFactorization fact(A_masked);
    Vector u_post = fact.solve(rhs);
    const double denom = u_post.dot(setup.forms.M_h * u_post);
    if (!(denom > 0.0))
        throw std::runtime_error("gpe_post_process: degenerate post-processed vector");
    u_post /= std::sqrt(denom);
    const double quart = setup.beta != 0.0 ? quartic_integral(setup.mesh, u_post) : 0.0;
    const double lambda_post = u_post.dot(A_op * u_post) + setup.beta * quart;
    return {lambda_post, u_post};
}

}  // namespace lod
