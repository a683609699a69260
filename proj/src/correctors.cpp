#include "lod/correctors.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>

namespace lod {

namespace {

// Fine cells covering the patch's central coarse element, ascending.
std::vector<int> central_fine_cells(const TwoScaleMesh& mesh, int ell) {
    const int r = mesh.refine();
    const auto [cx, cy] = mesh.cell_coords(Level::Coarse, ell);
    std::vector<int> cells;
    cells.reserve(static_cast<size_t>(r) * r);
    for (int b = 0; b < r; ++b)
        for (int a = 0; a < r; ++a)
            cells.push_back(mesh.cell_index(Level::Fine, cx * r + a, cy * r + b));
    return cells;
}

}  // namespace

LocalSystem local_system(const Patch& patch, const SparseMatrix& A_op, const SparseMatrix& C_h) {
    if (patch.active_fine_nodes.empty() || patch.active_coarse_nodes.empty())
        throw std::runtime_error("local_system: degenerate patch " + std::to_string(patch.ell) +
                                 " with empty active node set");
    LocalSystem sys;
    sys.A_ell = gather_submatrix(A_op, patch.active_fine_nodes, patch.active_fine_nodes);
    sys.C_ell = gather_submatrix(C_h, patch.active_coarse_nodes, patch.active_fine_nodes);
    return sys;
}

DenseMatrix local_rhs(const TwoScaleMesh& mesh, const Patch& patch, const BoundarySpec& bc,
                      const std::function<ElementMatrix(int)>& cell_block,
                      const SparseMatrix& P_h) {
    const int n_fine = mesh.num_nodes(Level::Fine);
    const auto& corners = patch.element_coarse_nodes;

    // Corner rows of P_h as dense lookups, zeroed for Dirichlet corners.
    DenseMatrix prows = DenseMatrix::Zero(4, n_fine);
    bool skip[4];
    for (int i = 0; i < 4; ++i) {
        skip[i] = mesh.classify_node(Level::Coarse, corners[i], bc) == NodeClass::Dirichlet;
        if (skip[i]) continue;
        for (SparseMatrix::InnerIterator it(P_h, corners[i]); it; ++it)
            prows(i, it.col()) = it.value();
    }

    DenseMatrix acc = DenseMatrix::Zero(4, n_fine);
    for (int t : central_fine_cells(mesh, patch.ell)) {
        const ElementMatrix E = cell_block(t);
        int g[4];
        for (int m = 0; m < 4; ++m) g[m] = mesh.sigma(Level::Fine, t, m);
        for (int i = 0; i < 4; ++i) {
            if (skip[i]) continue;
            for (int m = 0; m < 4; ++m) {
                const double p = prows(i, g[m]);
                if (p == 0.0) continue;
                for (int n = 0; n < 4; ++n) acc(i, g[n]) -= p * E(m, n);
            }
        }
    }

    const int n_active = static_cast<int>(patch.active_fine_nodes.size());
    DenseMatrix r(4, n_active);
    for (int j = 0; j < n_active; ++j) r.col(j) = acc.col(patch.active_fine_nodes[j]);
    return r;
}

SchurCache::SchurCache(LocalSystem sys, int patch_id) : sys_(std::move(sys)) {
    A_inv_ = std::make_unique<SpdFactorization>(sys_.A_ell);
    const DenseMatrix Ct = DenseMatrix(sys_.C_ell).transpose();
    Y_ = A_inv_->solve(Ct);
    const DenseMatrix S = sys_.C_ell * Y_;
    Eigen::LLT<DenseMatrix> llt(S);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("SchurCache: rank-deficient Schur complement on patch " +
                                 std::to_string(patch_id));
    S_inv_ = llt.solve(DenseMatrix::Identity(S.rows(), S.cols()));
    const double residual = (S * S_inv_ - DenseMatrix::Identity(S.rows(), S.cols()))
                                .cwiseAbs()
                                .maxCoeff();
    if (!(residual <= 1e-9))
        throw std::runtime_error("SchurCache: Schur inverse residual " +
                                 std::to_string(residual) + " on patch " +
                                 std::to_string(patch_id));
}

Vector SchurCache::solve(const Vector& rhs) const {
    const Vector q = A_inv_->solve(rhs);
    const Vector lambda = S_inv_ * (sys_.C_ell * q);
    return q - Y_ * lambda;
}

Vector source_rhs(const TwoScaleMesh& mesh, const Patch& patch, const BoundarySpec& bc,
                  const std::function<ElementMatrix(int)>& cell_block, const SourceSpec& Fs) {
    const int n_active = static_cast<int>(patch.active_fine_nodes.size());
    if (Fs.empty()) return Vector::Zero(n_active);

    Vector acc = Vector::Zero(mesh.num_nodes(Level::Fine));
    const double hx = mesh.hx(Level::Fine);
    const double hy = mesh.hy(Level::Fine);
    const int nxh = mesh.nx(Level::Fine);
    const int nyh = mesh.ny(Level::Fine);
    const DomainRect& d = mesh.domain();

    for (int t : central_fine_cells(mesh, patch.ell)) {
        int g[4];
        for (int m = 0; m < 4; ++m) g[m] = mesh.sigma(Level::Fine, t, m);

        if (!Fs.eta1.empty()) {
            const double v = Fs.eta1[t] * 0.25 * hx * hy;
            for (int m = 0; m < 4; ++m) acc[g[m]] += v;
        }
        if (Fs.eta2.size() != 0) {
            const ElementMatrix E = cell_block(t);
            for (int m = 0; m < 4; ++m) {
                double v = 0.0;
                for (int n = 0; n < 4; ++n) v += E(m, n) * Fs.eta2[g[n]];
                acc[g[m]] += v;
            }
        }
        if (Fs.eta3) {
            const auto [fx, fy] = mesh.cell_coords(Level::Fine, t);
            auto add_edge = [&](int n0, int n1, double mx, double my, double len) {
                const double v = Fs.eta3(mx, my) * 0.5 * len;
                acc[n0] += v;
                acc[n1] += v;
            };
            if (fx == 0 && bc.left == BcType::Neumann)
                add_edge(g[0], g[3], d.x0, d.y0 + (fy + 0.5) * hy, hy);
            if (fx == nxh - 1 && bc.right == BcType::Neumann)
                add_edge(g[1], g[2], d.x1, d.y0 + (fy + 0.5) * hy, hy);
            if (fy == 0 && bc.bottom == BcType::Neumann)
                add_edge(g[0], g[1], d.x0 + (fx + 0.5) * hx, d.y0, hx);
            if (fy == nyh - 1 && bc.top == BcType::Neumann)
                add_edge(g[3], g[2], d.x0 + (fx + 0.5) * hx, d.y1, hx);
        }
    }

    Vector r(n_active);
    for (int j = 0; j < n_active; ++j) r[j] = -acc[patch.active_fine_nodes[j]];
    return r;
}

namespace {

struct PatchOutput {
    std::vector<Eigen::Triplet<double>> trips;
    Vector w_hat;                // gathered source-corrector piece (size 0 if none)
    std::vector<int> fine_nodes;  // scatter targets for w_hat
    PatchStats stats;
};

void check_kernel(const SparseMatrix& C, const Vector& w, int ell) {
    const double wn = w.lpNorm<Eigen::Infinity>();
    if (wn == 0.0) return;
    const double rn = (C * w).lpNorm<Eigen::Infinity>();
    if (!(rn <= 1e-8 * wn))
        throw std::runtime_error("compute_corrections: constraint residual " +
                                 std::to_string(rn / wn) + " on patch " + std::to_string(ell));
}

PatchOutput process_patch(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                          const std::function<ElementMatrix(int)>& cell_block,
                          const SparseMatrix& A_op, const SparseMatrix& C_h,
                          const SparseMatrix& P_h, int k, int ell, const SourceSpec* Fs) {
    PatchOutput out;
    out.stats.ell = ell;

    const Patch patch = build_patch(mesh, ell, k, bc);
    out.stats.n_coarse = static_cast<int>(patch.active_coarse_nodes.size());
    out.stats.n_fine = static_cast<int>(patch.active_fine_nodes.size());

    const DenseMatrix r = local_rhs(mesh, patch, bc, cell_block, P_h);
    std::array<bool, 4> nonzero{};
    bool any_basis = false;
    for (int i = 0; i < 4; ++i) {
        nonzero[i] = r.row(i).lpNorm<Eigen::Infinity>() != 0.0;
        any_basis = any_basis || nonzero[i];
    }
    Vector r_hat;
    if (Fs) {
        r_hat = source_rhs(mesh, patch, bc, cell_block, *Fs);
        if (r_hat.lpNorm<Eigen::Infinity>() == 0.0) r_hat.resize(0);
    }
    if (!any_basis && r_hat.size() == 0) return out;

    const SchurCache cache(local_system(patch, A_op, C_h), ell);
    out.stats.solves = cache.precompute_solves();

    for (int i = 0; i < 4; ++i) {
        if (!nonzero[i]) continue;
        const Vector w = cache.solve(r.row(i).transpose());
        ++out.stats.solves;
        check_kernel(cache.constraints(), w, ell);
        const int row = patch.element_coarse_nodes[i];
        for (int j = 0; j < w.size(); ++j)
            if (w[j] != 0.0) out.trips.emplace_back(row, patch.active_fine_nodes[j], w[j]);
    }
    if (r_hat.size() != 0) {
        out.w_hat = cache.solve(r_hat);
        ++out.stats.solves;
        check_kernel(cache.constraints(), out.w_hat, ell);
        out.fine_nodes = patch.active_fine_nodes;
    }
    return out;
}

}  // namespace

CorrectorResult compute_corrections(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                                    const std::function<ElementMatrix(int)>& cell_block,
                                    const SparseMatrix& A_op, const SparseMatrix& C_h,
                                    const SparseMatrix& P_h, const CorrectorOptions& opts,
                                    const SourceSpec* Fs) {
    if (opts.k < 0) throw std::invalid_argument("compute_corrections: k must be nonnegative");
    if (opts.threads < 1) throw std::invalid_argument("compute_corrections: threads must be >= 1");

    const int n_coarse_nodes = mesh.num_nodes(Level::Coarse);
    const int n_fine_nodes = mesh.num_nodes(Level::Fine);
    const int n_patches = mesh.num_cells(Level::Coarse);

    CorrectorResult result;
    result.Q_h = SparseMatrix(n_coarse_nodes, n_fine_nodes);
    result.q_hat = Vector::Zero(n_fine_nodes);

    // With matching meshes the detail space is trivial: all correctors vanish.
    if (mesh.refine() == 1) {
        result.stats.resize(n_patches);
        for (int ell = 0; ell < n_patches; ++ell) result.stats[ell].ell = ell;
        return result;
    }

    std::vector<PatchOutput> outputs(n_patches);
    const int workers = std::min(opts.threads, n_patches);
    if (workers <= 1) {
        for (int ell = 0; ell < n_patches; ++ell)
            outputs[ell] = process_patch(mesh, bc, cell_block, A_op, C_h, P_h, opts.k, ell, Fs);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&] {
            for (int ell = next.fetch_add(1); ell < n_patches; ell = next.fetch_add(1)) {
                try {
                    outputs[ell] =
                        process_patch(mesh, bc, cell_block, A_op, C_h, P_h, opts.k, ell, Fs);
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

    // Ascending-patch merge keeps the result independent of scheduling.
    std::vector<Eigen::Triplet<double>> trips;
    result.stats.reserve(n_patches);
    for (int ell = 0; ell < n_patches; ++ell) {
        PatchOutput& out = outputs[ell];
        trips.insert(trips.end(), out.trips.begin(), out.trips.end());
        if (out.w_hat.size() != 0) scatter_add(result.q_hat, out.w_hat, out.fine_nodes);
        result.stats.push_back(out.stats);
    }
    result.Q_h.setFromTriplets(trips.begin(), trips.end());
    return result;
}

std::function<ElementMatrix(int)> operator_blocks(const TwoScaleMesh& mesh,
                                                  const CoefficientField& kappa,
                                                  const std::optional<PotentialField>& V) {
    kappa.validate(mesh);
    if (V) V->validate(mesh);
    const ElementMatrix K_unit = element_stiffness(1.0, mesh.hx(Level::Fine), mesh.hy(Level::Fine));
    const ElementMatrix M_unit = element_mass(mesh.hx(Level::Fine), mesh.hy(Level::Fine));
    std::vector<double> kv = kappa.values;
    std::vector<double> vv = V ? V->values : std::vector<double>();
    return [K_unit, M_unit, kv = std::move(kv), vv = std::move(vv)](int t) {
        ElementMatrix E = kv[t] * K_unit;
        if (!vv.empty()) E += vv[t] * M_unit;
        return E;
    };
}

CorrectorResult compute_corrections(const TwoScaleMesh& mesh, const BoundarySpec& bc,
                                    const CoefficientField& kappa, int k, int threads,
                                    const SourceSpec* Fs) {
    const SparseMatrix A_h = assemble_stiffness(mesh, kappa);
    const SparseMatrix M_h = assemble_mass(mesh, Level::Fine);
    const SparseMatrix P_h = projection_matrix(mesh);
    const SparseMatrix C_h = constraint_matrix(P_h, M_h);
    CorrectorOptions opts;
    opts.k = k;
    opts.threads = threads;
    return compute_corrections(mesh, bc, operator_blocks(mesh, kappa), A_h, C_h, P_h, opts, Fs);
}

void write_patch_stats_csv(std::ostream& os, const std::vector<PatchStats>& stats) {
    os << "ell,n_coarse,n_fine,solves\n";
    for (const PatchStats& s : stats)
        os << s.ell << ',' << s.n_coarse << ',' << s.n_fine << ',' << s.solves << '\n';
}

}  // namespace lod
