#include "lod/experiments.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lod/eigen_lod.hpp"
#include "lod/lod_solve.hpp"

namespace lod {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ScalarField2D make_f(const ExperimentConfig& c) {
    if (c.f_type == "zero") return nullptr;
    if (c.f_type == "constant") {
        const double v = c.f_value;
        return [v](double, double) { return v; };
    }
    throw std::invalid_argument("config: unknown f_type '" + c.f_type + "'");
}

ScalarField2D make_g(const ExperimentConfig& c) {
    if (c.g_type == "zero") return nullptr;
    if (c.g_type == "constant") {
        const double v = c.g_value;
        return [v](double, double) { return v; };
    }
    if (c.g_type == "oscillatory") {
        const double v = c.g_value, w = c.g_freq;
        return [v, w](double x, double y) { return v * std::sin(w * M_PI * (x + y)); };
    }
    throw std::invalid_argument("config: unknown g_type '" + c.g_type + "'");
}

ScalarField2D make_q(const ExperimentConfig& c) {
    if (c.q_type == "zero") return nullptr;
    if (c.q_type == "constant") {
        const double v = c.q_value;
        return [v](double, double) { return v; };
    }
    throw std::invalid_argument("config: unknown q_type '" + c.q_type + "'");
}

int effective_k(const ExperimentConfig& c, const TwoScaleMesh& mesh, int k) {
    if (c.full_patches) return std::max(mesh.nx(Level::Coarse), mesh.ny(Level::Coarse));
    if (c.m > 0) {
        const double H = std::max(mesh.hx(Level::Coarse), mesh.hy(Level::Coarse));
        return static_cast<int>(std::ceil(c.m * std::fabs(std::log(H))));
    }
    return k;
}

double eoc(double err_prev, double err, double H_prev, double H) {
    if (err <= 0.0 || err_prev <= 0.0) return 0.0;
    return std::log(err_prev / err) / std::log(H_prev / H);
}

// ---- reference caching ------------------------------------------------------

std::string cache_path(const ExperimentConfig& c, const std::string& tag) {
    if (c.cache_dir.empty()) return {};
    std::ostringstream key;
    key << tag << '|' << c.problem << '|' << c.h << '|' << c.domain.x0 << ',' << c.domain.y0
        << ',' << c.domain.x1 << ',' << c.domain.y1 << '|' << c.kappa_type << '|'
        << c.kappa_value << '|' << c.seed << '|' << c.contrast << '|' << c.kappa_path << '|'
        << c.use_potential << '|' << c.potential_type << '|' << c.gamma << '|' << c.wave_k
        << '|' << c.n_ev << '|' << c.beta << '|' << c.f_type << ',' << c.f_value << '|'
        << c.g_type << ',' << c.g_value << ',' << c.g_freq << '|' << c.q_type << ','
        << c.q_value;
    std::ostringstream name;
    name << "ref_" << std::hex << std::hash<std::string>{}(key.str()) << ".txt";
    return (std::filesystem::path(c.cache_dir) / name.str()).string();
}

bool load_cached(const std::string& path, Vector& v) {
    if (path.empty()) return false;
    std::ifstream in(path);
    if (!in) return false;
    long n = 0;
    if (!(in >> n) || n < 0) return false;
    Vector tmp(n);
    for (long i = 0; i < n; ++i)
        if (!(in >> tmp[i])) return false;
    v = std::move(tmp);
    return true;
}

void store_cached(const std::string& path, const Vector& v) {
    if (path.empty()) return;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream out(path);
    out << std::setprecision(17) << v.size() << '\n';
    for (int i = 0; i < v.size(); ++i) out << v[i] << '\n';
}

void csv_header(std::ostream& os, const char* columns) { os << columns << '\n'; }

struct CsvFmt {
    double v;
};

std::ostream& operator<<(std::ostream& os, CsvFmt f) {
    std::ostringstream tmp;
    tmp << std::scientific << std::setprecision(10) << f.v;
    return os << tmp.str();
}

}  // namespace

CoefficientField gen_checkerboard_kappa(const TwoScaleMesh& mesh, std::uint64_t seed,
                                        double contrast) {
    if (contrast < 1.0)
        throw std::invalid_argument("gen_checkerboard_kappa: contrast must be >= 1");
    std::mt19937_64 rng(seed);
    CoefficientField field;
    field.values.resize(mesh.num_cells(Level::Fine));
    for (double& v : field.values) v = (rng() & 1u) ? contrast : 1.0;
    return field;
}

PotentialField gen_kronig_penney_V(const TwoScaleMesh& mesh, double gamma, int wave_k) {
    if (gamma < 0.0) throw std::invalid_argument("gen_kronig_penney_V: gamma must be >= 0");
    PotentialField field;
    field.values.resize(mesh.num_cells(Level::Fine));
    for (int t = 0; t < mesh.num_cells(Level::Fine); ++t) {
        const auto [x, y] = mesh.cell_midpoint(Level::Fine, t);
        const double s = std::cos(M_PI * wave_k * (x + 0.1)) * std::cos(M_PI * wave_k * y);
        field.values[t] = s > 0.0 ? gamma : 0.0;
    }
    return field;
}

std::pair<double, double> error_norms(const Vector& u, const Vector& v, const SparseMatrix& M_h,
                                      const SparseMatrix& A_unit) {
    if (u.size() != v.size() || u.size() != M_h.rows())
        throw std::invalid_argument("error_norms: length mismatch");
    const Vector e = u - v;
    const double l2sq = e.dot(M_h * e);
    const double h1sq = l2sq + e.dot(A_unit * e);
    return {std::sqrt(std::max(0.0, l2sq)), std::sqrt(std::max(0.0, h1sq))};
}

void write_field(std::ostream& os, const TwoScaleMesh& mesh, const std::vector<double>& values) {
    if (static_cast<int>(values.size()) != mesh.num_cells(Level::Fine))
        throw std::invalid_argument("write_field: size mismatch");
    os << mesh.nx(Level::Fine) << ' ' << mesh.ny(Level::Fine) << '\n';
    os << std::setprecision(17);
    for (int t = 0; t < static_cast<int>(values.size()); ++t)
        os << values[t] << ((t + 1) % mesh.nx(Level::Fine) == 0 ? '\n' : ' ');
}

std::vector<double> read_field(std::istream& is, const TwoScaleMesh& mesh) {
    int nx = 0, ny = 0;
    if (!(is >> nx >> ny)) throw std::invalid_argument("read_field: bad header");
    if (nx != mesh.nx(Level::Fine) || ny != mesh.ny(Level::Fine))
        throw std::invalid_argument("read_field: field dimensions do not match the fine grid");
    std::vector<double> values(static_cast<size_t>(nx) * ny);
    for (double& v : values)
        if (!(is >> v)) throw std::invalid_argument("read_field: truncated value list");
    return values;
}

ExperimentConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
    }
    ExperimentConfig c;
    auto bc_from = [](const std::string& s) {
        if (s == "dirichlet") return BcType::Dirichlet;
        if (s == "neumann") return BcType::Neumann;
        throw std::invalid_argument("config: bc side must be 'dirichlet' or 'neumann'");
    };
    for (const auto& [key, val] : j.items()) {
        if (key == "problem") c.problem = val.get<std::string>();
        else if (key == "domain") {
            if (val.is_array()) {
                if (val.size() != 4)
                    throw std::invalid_argument("config: domain array must be [x0,y0,x1,y1]");
                c.domain = {val[0].get<double>(), val[1].get<double>(), val[2].get<double>(),
                            val[3].get<double>()};
            } else {
                c.domain.x0 = val.value("x0", 0.0);
                c.domain.y0 = val.value("y0", 0.0);
                c.domain.x1 = val.value("x1", 1.0);
                c.domain.y1 = val.value("y1", 1.0);
            }
        } else if (key == "h") c.h = val.get<double>();
        else if (key == "H_list") c.H_list = val.get<std::vector<double>>();
        else if (key == "k_list") c.k_list = val.get<std::vector<int>>();
        else if (key == "m") c.m = val.get<int>();
        else if (key == "full_patches") c.full_patches = val.get<bool>();
        else if (key == "bc") {
            if (val.is_string()) {
                const BcType t = bc_from(val.get<std::string>());
                c.bc = {t, t, t, t};
            } else {
                c.bc.left = bc_from(val.value("left", "dirichlet"));
                c.bc.right = bc_from(val.value("right", "dirichlet"));
                c.bc.bottom = bc_from(val.value("bottom", "dirichlet"));
                c.bc.top = bc_from(val.value("top", "dirichlet"));
            }
        } else if (key == "kappa_type") c.kappa_type = val.get<std::string>();
        else if (key == "kappa_value") c.kappa_value = val.get<double>();
        else if (key == "seed") c.seed = val.get<std::uint64_t>();
        else if (key == "contrast") c.contrast = val.get<double>();
        else if (key == "kappa_path") c.kappa_path = val.get<std::string>();
        else if (key == "use_potential") c.use_potential = val.get<bool>();
        else if (key == "potential_type") c.potential_type = val.get<std::string>();
        else if (key == "gamma") c.gamma = val.get<double>();
        else if (key == "wave_k") c.wave_k = val.get<int>();
        else if (key == "f_type") c.f_type = val.get<std::string>();
        else if (key == "f_value") c.f_value = val.get<double>();
        else if (key == "g_type") c.g_type = val.get<std::string>();
        else if (key == "g_value") c.g_value = val.get<double>();
        else if (key == "g_freq") c.g_freq = val.get<double>();
        else if (key == "q_type") c.q_type = val.get<std::string>();
        else if (key == "q_value") c.q_value = val.get<double>();
        else if (key == "source_mode") c.source_mode = val.get<std::string>();
        else if (key == "source_correctors") c.source_correctors = val.get<bool>();
        else if (key == "n_ev") c.n_ev = val.get<int>();
        else if (key == "beta") c.beta = val.get<double>();
        else if (key == "delta_tol") c.delta_tol = val.get<double>();
        else if (key == "rhs_mode") c.rhs_mode = val.get<std::string>();
        else if (key == "threads") c.threads = val.get<int>();
        else if (key == "out") c.out = val.get<std::string>();
        else if (key == "cache_dir") c.cache_dir = val.get<std::string>();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    if (c.H_list.empty()) throw std::invalid_argument("config: H_list must not be empty");
    if (c.k_list.empty()) throw std::invalid_argument("config: k_list must not be empty");
    if (c.m < 0) throw std::invalid_argument("config: m must be nonnegative");
    if (!(c.h > 0.0)) throw std::invalid_argument("config: h must be positive");
    return c;
}

TwoScaleMesh mesh_for(const ExperimentConfig& config, double H) {
    const double lx = config.domain.x1 - config.domain.x0;
    const double ly = config.domain.y1 - config.domain.y0;
    const int nxH = static_cast<int>(std::lround(lx / H));
    const int nyH = static_cast<int>(std::lround(ly / H));
    const int refine = static_cast<int>(std::lround(H / config.h));
    if (nxH < 1 || nyH < 1 || refine < 1 || std::abs(nxH * H - lx) > 1e-12 * std::max(1.0, lx) ||
        std::abs(nyH * H - ly) > 1e-12 * std::max(1.0, ly) ||
        std::abs(refine * config.h - H) > 1e-12)
        throw std::invalid_argument("config: H must tile the domain and be a multiple of h");
    return TwoScaleMesh(config.domain, nxH, nyH, refine);
}

CoefficientField kappa_for(const ExperimentConfig& config, const TwoScaleMesh& mesh) {
    if (config.kappa_type == "constant")
        return CoefficientField::constant(mesh, config.kappa_value);
    if (config.kappa_type == "checkerboard")
        return gen_checkerboard_kappa(mesh, config.seed, config.contrast);
    if (config.kappa_type == "file") {
        std::ifstream in(config.kappa_path);
        if (!in)
            throw std::invalid_argument("config: cannot open kappa file '" + config.kappa_path +
                                        "'");
        CoefficientField field{read_field(in, mesh)};
        field.validate(mesh);
        return field;
    }
    throw std::invalid_argument("config: unknown kappa_type '" + config.kappa_type + "'");
}

std::optional<PotentialField> potential_for(const ExperimentConfig& config,
                                            const TwoScaleMesh& mesh) {
    if (!config.use_potential) return std::nullopt;
    if (config.potential_type == "kronig")
        return gen_kronig_penney_V(mesh, config.gamma, config.wave_k);
    if (config.potential_type == "bowl") {
        const double cx = 0.5 * (config.domain.x0 + config.domain.x1);
        const double cy = 0.5 * (config.domain.y0 + config.domain.y1);
        PotentialField field;
        field.values.resize(mesh.num_cells(Level::Fine));
        for (int t = 0; t < mesh.num_cells(Level::Fine); ++t) {
            const auto [x, y] = mesh.cell_midpoint(Level::Fine, t);
            field.values[t] = config.gamma * ((x - cx) * (x - cx) + (y - cy) * (y - cy));
        }
        return field;
    }
    throw std::invalid_argument("config: unknown potential_type '" + config.potential_type + "'");
}

namespace {

std::vector<PoissonRow> run_poisson_like(const ExperimentConfig& config, bool bvp) {
    const ScalarField2D f = make_f(config);
    const ScalarField2D g = bvp ? make_g(config) : nullptr;
    const ScalarField2D q = bvp ? make_q(config) : nullptr;
    const RhsMode mode = config.rhs_mode == "plain" ? RhsMode::Plain : RhsMode::Corrected;

    // Fine reference, shared across the sweep (the fine grid is H-independent).
    const TwoScaleMesh mesh0 = mesh_for(config, config.H_list.front());
    const CoefficientField kappa0 = kappa_for(config, mesh0);
    const AssembledForms forms0 = assemble_forms(mesh0, config.bc, kappa0);
    const SparseMatrix A_unit =
        assemble_stiffness(mesh0, CoefficientField::constant(mesh0, 1.0));
    Vector u_ref;
    const std::string cache = cache_path(config, bvp ? "bvp" : "poisson");
    if (!load_cached(cache, u_ref) || u_ref.size() != mesh0.num_nodes(Level::Fine)) {
        u_ref = solve_fine_reference(mesh0, config.bc, forms0, f, g, q);
        store_cached(cache, u_ref);
    }

    std::vector<PoissonRow> rows;
    for (int k : config.k_list) {
        double prev_H = 0.0, prev_l2 = 0.0, prev_h1 = 0.0;
        bool first = true;
        for (double H : config.H_list) {
            const TwoScaleMesh mesh = mesh_for(config, H);
            const CoefficientField kappa = kappa_for(config, mesh);
            const int keff = effective_k(config, mesh, k);

            Vector u;
            if (bvp) {
                BvpConfig bcfg;
                bcfg.f = f;
                bcfg.g = g;
                bcfg.q = q;
                bcfg.source_mode =
                    config.source_mode == "total" ? SourceMode::Total : SourceMode::Boundary;
                bcfg.source_correctors = config.source_correctors;
                bcfg.k = keff;
                bcfg.threads = config.threads;
                u = solve_bvp(mesh, config.bc, kappa, bcfg).u_h;
            } else {
                const AssembledForms forms = assemble_forms(mesh, config.bc, kappa);
                CorrectorOptions copts;
                copts.k = keff;
                copts.threads = config.threads;
                const CorrectorResult corr =
                    compute_corrections(mesh, config.bc, operator_blocks(mesh, kappa),
                                        forms.A_h, forms.C_h, forms.P_h, copts);
                const Vector f_h = f ? load_vector(mesh, f)
                                     : Vector::Zero(mesh.num_nodes(Level::Fine));
                u = solve_lod(build_lod_system(forms, corr.Q_h, f_h, mode)).u_h;
            }

            PoissonRow row;
            row.H = H;
            row.k = keff;
            std::tie(row.err_L2, row.err_H1) = error_norms(u, u_ref, forms0.M_h, A_unit);
            if (!first) {
                row.eoc_L2 = eoc(prev_l2, row.err_L2, prev_H, H);
                row.eoc_H1 = eoc(prev_h1, row.err_H1, prev_H, H);
            }
            prev_H = H;
            prev_l2 = row.err_L2;
            prev_h1 = row.err_H1;
            first = false;
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace

std::vector<PoissonRow> run_poisson_convergence(const ExperimentConfig& config) {
    return run_poisson_like(config, false);
}

std::vector<PoissonRow> run_bvp(const ExperimentConfig& config) {
    return run_poisson_like(config, true);
}

void write_poisson_csv(std::ostream& os, const std::vector<PoissonRow>& rows) {
    csv_header(os, "H,k,err_L2,err_H1,eoc_L2,eoc_H1");
    for (const PoissonRow& r : rows)
        os << CsvFmt{r.H} << ',' << r.k << ',' << CsvFmt{r.err_L2} << ',' << CsvFmt{r.err_H1}
           << ',' << CsvFmt{r.eoc_L2} << ',' << CsvFmt{r.eoc_H1} << '\n';
}

std::vector<EvpRow> run_evp(const ExperimentConfig& config) {
    const TwoScaleMesh mesh0 = mesh_for(config, config.H_list.front());
    const CoefficientField kappa0 = kappa_for(config, mesh0);
    const auto V0 = potential_for(config, mesh0);
    const AssembledForms forms0 = assemble_forms(mesh0, config.bc, kappa0, V0);
    const SparseMatrix A_op0 = forms0.A_h + forms0.M_Vh;

    EigOptions eopts;
    eopts.n_ev = config.n_ev;

    Vector lambda_full;
    double t_full = 0.0;
    const std::string cache = cache_path(config, "evp");
    if (!load_cached(cache, lambda_full) || lambda_full.size() != config.n_ev) {
        const auto t0 = std::chrono::steady_clock::now();
        lambda_full =
            restricted_eig(A_op0, forms0.M_h, forms0.active_fine, eopts).lambdas;
        t_full = seconds_since(t0);
        store_cached(cache, lambda_full);
    }

    std::vector<EvpRow> rows;
    for (int k : config.k_list) {
        for (double H : config.H_list) {
            const TwoScaleMesh mesh = mesh_for(config, H);
            const CoefficientField kappa = kappa_for(config, mesh);
            const auto V = potential_for(config, mesh);
            const AssembledForms forms = assemble_forms(mesh, config.bc, kappa, V);
            const SparseMatrix A_op = forms.A_h + forms.M_Vh;

            EvpRow row;
            row.H = H;
            row.k = effective_k(config, mesh, k);
            row.n_ev = config.n_ev;
            row.t_full = t_full;

            // Plain coarse Galerkin pencil.
            auto t0 = std::chrono::steady_clock::now();
            const SparseMatrix A_H = forms.B_H *
                                     SparseMatrix(forms.P_h *
                                                  SparseMatrix(A_op * forms.P_h.transpose())) *
                                     forms.B_H;
            const SparseMatrix M_H = forms.B_H *
                                     SparseMatrix(forms.P_h *
                                                  SparseMatrix(forms.M_h *
                                                               forms.P_h.transpose())) *
                                     forms.B_H;
            const Vector lambda_coarse =
                restricted_eig(A_H, M_H, forms.active_coarse, eopts).lambdas;
            row.t_coarse = seconds_since(t0);

            // LOD pencil.
            t0 = std::chrono::steady_clock::now();
            CorrectorOptions copts;
            copts.k = effective_k(config, mesh, k);
            copts.threads = config.threads;
            const CorrectorResult corr =
                compute_corrections(mesh, config.bc, operator_blocks(mesh, kappa, V), A_op,
                                    forms.C_h, forms.P_h, copts);
            row.t_corr = seconds_since(t0);
            t0 = std::chrono::steady_clock::now();
            const SparseMatrix A_lod = assemble_lod(A_op, forms.P_h, corr.Q_h, forms.B_H);
            const SparseMatrix M_lod = lod_mass(forms.M_h, forms.P_h, corr.Q_h, forms.B_H);
            const Vector lambda_lod =
                restricted_eig(A_lod, M_lod, forms.active_coarse, eopts).lambdas;
            row.t_LOD = seconds_since(t0);

            row.err_coarse = (lambda_coarse - lambda_full).lpNorm<Eigen::Infinity>();
            row.err_LOD = (lambda_lod - lambda_full).lpNorm<Eigen::Infinity>();
            rows.push_back(row);
        }
    }
    return rows;
}

void write_evp_csv(std::ostream& os, const std::vector<EvpRow>& rows) {
    csv_header(os, "H,k,n_ev,err_coarse,err_LOD,t_coarse,t_full,t_corr,t_LOD");
    for (const EvpRow& r : rows)
        os << CsvFmt{r.H} << ',' << r.k << ',' << r.n_ev << ',' << CsvFmt{r.err_coarse} << ','
           << CsvFmt{r.err_LOD} << ',' << CsvFmt{r.t_coarse} << ',' << CsvFmt{r.t_full} << ','
           << CsvFmt{r.t_corr} << ',' << CsvFmt{r.t_LOD} << '\n';
}

std::vector<GpeRow> run_gpe(const ExperimentConfig& config) {
    // Fine reference: the same damping iteration run with matching grids, so
    // the two-scale space equals the fine space.
    const TwoScaleMesh mesh0 = mesh_for(config, config.H_list.front());
    const TwoScaleMesh mesh_ref(config.domain, mesh0.nx(Level::Fine), mesh0.ny(Level::Fine), 1);
    const CoefficientField kappa_ref = kappa_for(config, mesh_ref);
    const auto V_ref = potential_for(config, mesh_ref);
    const GpeSetup setup_ref =
        gpe_setup(mesh_ref, config.bc, kappa_ref, V_ref, config.beta, 0, config.threads);
    const GpeRun run_ref = gpe_solve(setup_ref, config.delta_tol);
    const Vector& u_ref = run_ref.state.u_fine;
    const SparseMatrix A_unit =
        assemble_stiffness(mesh_ref, CoefficientField::constant(mesh_ref, 1.0));

    std::vector<GpeRow> rows;
    for (int k : config.k_list) {
        for (double H : config.H_list) {
            const TwoScaleMesh mesh = mesh_for(config, H);
            const CoefficientField kappa = kappa_for(config, mesh);
            const auto V = potential_for(config, mesh);
            const GpeSetup setup = gpe_setup(mesh, config.bc, kappa, V, config.beta,
                                             effective_k(config, mesh, k), config.threads);
            const GpeRun run = gpe_solve(setup, config.delta_tol);
            for (size_t i = 1; i < run.energy_history.size(); ++i)
                if (run.energy_history[i] > run.energy_history[i - 1] + 1e-12) {
                    std::ostringstream msg;
                    msg << "run_gpe: energy increased at step " << i << " ("
                        << std::setprecision(17) << run.energy_history[i - 1] << " -> "
                        << run.energy_history[i] << ", alpha " << run.state.alpha << ")";
                    throw std::runtime_error(msg.str());
                }

            GpeRow row;
            row.H = H;
            row.k = effective_k(config, mesh, k);
            row.lambda_lod = run.state.lambda_val;
            row.lambda_post = gpe_post_process(run.state, setup).first;
            row.iterations = run.iterations;
            row.s_over_E = std::abs(run.state.s_val / run.state.E_val);
            Vector u = run.state.u_fine;
            if (u.dot(setup.forms.M_h * u_ref) < 0.0) u = -u;
            std::tie(row.err_L2, row.err_H1) =
                error_norms(u, u_ref, setup_ref.forms.M_h, A_unit);
            rows.push_back(row);
        }
    }
    return rows;
}

void write_gpe_csv(std::ostream& os, const std::vector<GpeRow>& rows) {
    csv_header(os, "H,k,lambda_lod,lambda_post,iterations,s_over_E,err_L2,err_H1");
    for (const GpeRow& r : rows)
        os << CsvFmt{r.H} << ',' << r.k << ',' << CsvFmt{r.lambda_lod} << ','
           << CsvFmt{r.lambda_post} << ',' << r.iterations << ',' << CsvFmt{r.s_over_E} << ','
           << CsvFmt{r.err_L2} << ',' << CsvFmt{r.err_H1} << '\n';
}

}  // namespace lod
