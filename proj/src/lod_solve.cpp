#include "lod/lod_solve.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <atomic>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

namespace lod {

namespace {

const ScalarField2D& or_zero(const ScalarField2D& f) {
    static const ScalarField2D zero = [](double, double) { return 0.0; };
    return f ? f : zero;
}

std::vector<char> active_flags(const SparseMatrix& B_H) {
    std::vector<char> flags(B_H.rows(), 0);
    for (int i = 0; i < B_H.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(B_H, i); it; ++it)
            if (it.value() != 0.0) flags[it.row()] = 1;
    return flags;
}

// Unit diagonal on masked-out rows makes the zero block trivially solvable.
SparseMatrix with_unit_diagonal(const SparseMatrix& A, const std::vector<char>& active) {
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < static_cast<int>(active.size()); ++i)
        if (!active[i]) trips.emplace_back(i, i, 1.0);
    SparseMatrix D(A.rows(), A.cols());
    D.setFromTriplets(trips.begin(), trips.end());
    return A + D;
}

void check_residual(const SparseMatrix& A, const Vector& u, const Vector& f, const char* what) {
    const double fn = f.norm();
    if (fn == 0.0) return;
    const double rn = (A * u - f).norm();
    if (!(rn <= 1e-10 * fn))
        throw std::runtime_error(std::string(what) + ": solve residual " + std::to_string(rn / fn));
}

}  // namespace

SparseMatrix assemble_lod(const SparseMatrix& A_h, const SparseMatrix& P_h,
                          const SparseMatrix& Q_h, const SparseMatrix& B_H) {
    const SparseMatrix PQ = P_h + Q_h;
    return B_H * SparseMatrix(PQ * SparseMatrix(A_h * PQ.transpose())) * B_H;
}

Vector lod_rhs(const Vector& f_h, const SparseMatrix& P_h, const SparseMatrix& Q_h,
               const SparseMatrix& B_H, RhsMode mode) {
    if (mode == RhsMode::Plain) return B_H * (P_h * f_h);
    return B_H * (P_h * f_h + Q_h * f_h);
}

LODSystem build_lod_system(const AssembledForms& forms, const SparseMatrix& Q_h,
                           const Vector& f_h, RhsMode mode) {
    LODSystem sys;
    sys.A_lod = assemble_lod(forms.A_h, forms.P_h, Q_h, forms.B_H);
    sys.f_lod = lod_rhs(f_h, forms.P_h, Q_h, forms.B_H, mode);
    sys.PQ = forms.P_h + Q_h;
    sys.active_coarse = forms.active_coarse;
    return sys;
}

LODSolution solve_lod(const LODSystem& system) {
    std::vector<char> active(system.A_lod.rows(), 0);
    for (int i : system.active_coarse) active[i] = 1;
    const SparseMatrix A = with_unit_diagonal(system.A_lod, active);
    SpdFactorization fact(A);
    LODSolution sol;
    sol.u_H = fact.solve(system.f_lod);
    check_residual(A, sol.u_H, system.f_lod, "solve_lod");
    sol.u_h = system.PQ.transpose() * sol.u_H;
    return sol;
}

Vector solve_fine_reference(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                            const AssembledForms& forms, const ScalarField2D& f,
                            const ScalarField2D& g, const ScalarField2D& q) {
    const auto [g_H, g_h] = dirichlet_extension(mesh, or_zero(g), bc);
    const Vector f_h = load_vector(mesh, or_zero(f)) + neumann_load(mesh, or_zero(q), bc) -
                       forms.A_h * g_h;
    std::vector<char> active(mesh.num_nodes(Level::Fine), 0);
    for (int i : forms.active_fine) active[i] = 1;
    const SparseMatrix A = with_unit_diagonal(
        SparseMatrix(forms.B_h * SparseMatrix(forms.A_h * forms.B_h)), active);
    const Vector rhs = forms.B_h * f_h;
    SpdFactorization fact(A);
    const Vector U = fact.solve(rhs);
    check_residual(A, U, rhs, "solve_fine_reference");
    return U + g_h;
}

namespace {

struct PGPatchOutput {
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<std::pair<int, double>> rhs_extra;  // corrected-rhs streaming
};

PGPatchOutput pg_process_patch(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                               const AssembledForms& forms,
                               const std::function<ElementMatrix(int)>& blocks, int k, int ell,
                               const Vector& f_h, bool corrected_rhs,
                               const std::vector<char>& active) {
    PGPatchOutput out;
    const Patch patch = build_patch(mesh, ell, k, bc);
    const DenseMatrix r = local_rhs(mesh, patch, bc, blocks, forms.P_h);
    bool any = false;
    for (int i = 0; i < 4 && !any; ++i) any = r.row(i).lpNorm<Eigen::Infinity>() != 0.0;
    if (!any) return out;

    const SchurCache cache(local_system(patch, forms.A_h, forms.C_h), ell);
    Vector z = Vector::Zero(mesh.num_nodes(Level::Fine));
    for (int i = 0; i < 4; ++i) {
        if (r.row(i).lpNorm<Eigen::Infinity>() == 0.0) continue;
        const Vector w = cache.solve(r.row(i).transpose());
        const int col = patch.element_coarse_nodes[i];
        z.setZero();
        scatter_add(z, w, patch.active_fine_nodes);
        const Vector contrib = forms.P_h * (forms.A_h * z);
        for (int m = 0; m < contrib.size(); ++m)
            if (contrib[m] != 0.0 && active[m]) out.trips.emplace_back(m, col, contrib[m]);
        if (corrected_rhs) out.rhs_extra.emplace_back(col, w.dot(gather_vector(f_h, patch.active_fine_nodes)));
    }
    return out;
}

}  // namespace

PGResult pg_assemble_and_solve(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                               const CoefficientField& kappa, const Vector& f_h,
                               const PGOptions& opts) {
    const AssembledForms forms = assemble_forms(mesh, bc, kappa);
    const auto blocks = operator_blocks(mesh, kappa);
    const std::vector<char> active = active_flags(forms.B_H);
    const int n_H = mesh.num_nodes(Level::Coarse);
    const int n_patches = mesh.num_cells(Level::Coarse);
    const bool corrected = opts.rhs == RhsMode::Corrected;

    // Coarse Galerkin block; the streamed updates add the corrector part.
    const SparseMatrix G = forms.B_H *
                           SparseMatrix(forms.P_h * SparseMatrix(forms.A_h * forms.P_h.transpose())) *
                           forms.B_H;

    std::vector<PGPatchOutput> outputs(n_patches);
    if (mesh.refine() > 1) {
        const int workers = std::max(1, std::min(opts.threads, n_patches));
        if (workers == 1) {
            for (int ell = 0; ell < n_patches; ++ell)
                outputs[ell] =
                    pg_process_patch(mesh, bc, forms, blocks, opts.k, ell, f_h, corrected, active);
        } else {
            std::atomic<int> next{0};
            std::exception_ptr error;
            std::mutex error_mutex;
            auto worker = [&] {
                for (int ell = next.fetch_add(1); ell < n_patches; ell = next.fetch_add(1)) {
                    try {
                        outputs[ell] = pg_process_patch(mesh, bc, forms, blocks, opts.k, ell, f_h,
                                                        corrected, active);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!error) error = std::current_exception();
                        return;
                    }
                }
            };
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
            if (error) std::rethrow_exception(error);
        }
    }

    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < G.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(G, i); it; ++it)
            trips.emplace_back(it.row(), it.col(), it.value());
    Vector rhs = forms.B_H * (forms.P_h * f_h);
    for (int ell = 0; ell < n_patches; ++ell) {
        const PGPatchOutput& out = outputs[ell];
        trips.insert(trips.end(), out.trips.begin(), out.trips.end());
        for (const auto& [row, v] : out.rhs_extra) rhs[row] += v;
    }
    PGResult result;
    result.A_pg = SparseMatrix(n_H, n_H);
    result.A_pg.setFromTriplets(trips.begin(), trips.end());

    const Eigen::SparseMatrix<double> A_solve = with_unit_diagonal(result.A_pg, active);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A_solve);
    if (lu.info() != Eigen::Success) {
        const DenseMatrix S = 0.5 * (DenseMatrix(A_solve) + DenseMatrix(A_solve).transpose());
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(S);
        throw std::runtime_error(
            "pg_assemble_and_solve: factorization failed; smallest symmetrized eigenvalue " +
            std::to_string(es.eigenvalues()[0]));
    }
    result.u_H = lu.solve(rhs);
    check_residual(SparseMatrix(A_solve), result.u_H, rhs, "pg_assemble_and_solve");
    return result;
}

BvpResult solve_bvp(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                    const CoefficientField& kappa, const BvpConfig& config) {
    const AssembledForms forms = assemble_forms(mesh, bc, kappa);
    const ScalarField2D& f = or_zero(config.f);
    const ScalarField2D& q = or_zero(config.q);
    const auto [g_H, g_h] = dirichlet_extension(mesh, or_zero(config.g), bc);

    const Vector f_h =
        load_vector(mesh, f) + neumann_load(mesh, q, bc) - forms.A_h * g_h;

    // Rough-source functional: the lift and Neumann parts of the load (plus
    // the volume term in total mode), exactly the terms a detail-space test
    // function still sees.
    SourceSpec Fs;
    if (config.source_correctors) {
        if (g_h.lpNorm<Eigen::Infinity>() != 0.0) Fs.eta2 = -g_h;
        const bool has_neumann = bc.left == BcType::Neumann || bc.right == BcType::Neumann ||
                                 bc.bottom == BcType::Neumann || bc.top == BcType::Neumann;
        if (config.q && has_neumann) Fs.eta3 = q;
        if (config.source_mode == SourceMode::Total && config.f) {
            Fs.eta1.resize(mesh.num_cells(Level::Fine));
            for (int t = 0; t < mesh.num_cells(Level::Fine); ++t) {
                const auto [mx, my] = mesh.cell_midpoint(Level::Fine, t);
                Fs.eta1[t] = f(mx, my);
            }
        }
    }

    CorrectorOptions copts;
    copts.k = config.k;
    copts.threads = config.threads;
    const CorrectorResult corr =
        compute_corrections(mesh, bc, operator_blocks(mesh, kappa), forms.A_h, forms.C_h,
                            forms.P_h, copts, Fs.empty() ? nullptr : &Fs);

    const Vector rhs_fine = f_h + forms.A_h * corr.q_hat;
    const LODSystem system = build_lod_system(forms, corr.Q_h, rhs_fine, RhsMode::Corrected);
    const LODSolution sol = solve_lod(system);

    BvpResult result;
    result.u_H = sol.u_H;
    result.q_hat = corr.q_hat;
    result.u_h = sol.u_h - corr.q_hat + g_h;
    return result;
}

}  // namespace lod
