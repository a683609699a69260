#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "lod/assembly.hpp"
#include "lod/grid.hpp"

namespace lod {

/// Per-fine-cell values drawn i.i.d. from {1, contrast}; deterministic in
/// (mesh, seed, contrast).
CoefficientField gen_checkerboard_kappa(const TwoScaleMesh& mesh, std::uint64_t seed,
                                        double contrast);

/// gamma * indicator(cos(pi k (x+0.1)) cos(pi k y) > 0) at fine-cell midpoints.
PotentialField gen_kronig_penney_V(const TwoScaleMesh& mesh, double gamma, int wave_k);

/// Discrete L2 and H1 error norms of u - v; A_unit is the unit-coefficient
/// stiffness so the metric does not depend on the problem's kappa.
std::pair<double, double> error_norms(const Vector& u, const Vector& v, const SparseMatrix& M_h,
                                      const SparseMatrix& A_unit);

/// Text field format: header "nx ny", then nx*ny reals in lexicographic
/// fine-cell order.
void write_field(std::ostream& os, const TwoScaleMesh& mesh, const std::vector<double>& values);
std::vector<double> read_field(std::istream& is, const TwoScaleMesh& mesh);

struct ExperimentConfig {
    std::string problem = "poisson";
    DomainRect domain{};
    double h = 1.0 / 64.0;
    std::vector<double> H_list = {1.0 / 4.0, 1.0 / 8.0};
    std::vector<int> k_list = {2};
    int m = 0;  // if > 0, overrides k_list with k = ceil(m*|ln H|) per H
    bool full_patches = false;
    BoundarySpec bc{};

    std::string kappa_type = "constant";  // constant | checkerboard | file
    double kappa_value = 1.0;
    std::uint64_t seed = 1234;
    double contrast = 100.0;
    std::string kappa_path;

    bool use_potential = false;
    std::string potential_type = "kronig";  // kronig | bowl
    double gamma = 0.0;
    int wave_k = 8;

    std::string f_type = "constant";  // constant | zero
    double f_value = 1.0;
    std::string g_type = "zero";  // zero | constant | oscillatory
    double g_value = 1.0;
    double g_freq = 4.0;
    std::string q_type = "zero";  // zero | constant
    double q_value = 0.0;
    std::string source_mode = "boundary";  // boundary | total
    bool source_correctors = true;

    int n_ev = 1;
    double beta = 0.0;
    double delta_tol = 1e-9;
    std::string rhs_mode = "corrected";  // corrected | plain
    int threads = 1;
    std::string out;
    std::string cache_dir;
};

/// Parse a JSON document into a config; unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text);

/// Coarse/fine mesh pair for one H of the sweep (fixed fine width h).
TwoScaleMesh mesh_for(const ExperimentConfig& config, double H);
CoefficientField kappa_for(const ExperimentConfig& config, const TwoScaleMesh& mesh);
std::optional<PotentialField> potential_for(const ExperimentConfig& config,
                                            const TwoScaleMesh& mesh);

struct PoissonRow {
    double H = 0.0;
    int k = 0;
    double err_L2 = 0.0, err_H1 = 0.0;
    double eoc_L2 = 0.0, eoc_H1 = 0.0;  // 0 for the first row of a k-group
};

std::vector<PoissonRow> run_poisson_convergence(const ExperimentConfig& config);
std::vector<PoissonRow> run_bvp(const ExperimentConfig& config);
void write_poisson_csv(std::ostream& os, const std::vector<PoissonRow>& rows);

struct EvpRow {
    double H = 0.0;
    int k = 0;
    int n_ev = 0;
    double err_coarse = 0.0, err_LOD = 0.0;
    double t_coarse = 0.0, t_full = 0.0, t_corr = 0.0, t_LOD = 0.0;  // seconds
};

std::vector<EvpRow> run_evp(const ExperimentConfig& config);
void write_evp_csv(std::ostream& os, const std::vector<EvpRow>& rows);

struct GpeRow {
    double H = 0.0;
    int k = 0;
    double lambda_lod = 0.0, lambda_post = 0.0;
    int iterations = 0;
    double s_over_E = 0.0;
    double err_L2 = 0.0, err_H1 = 0.0;
};

std::vector<GpeRow> run_gpe(const ExperimentConfig& config);
void write_gpe_csv(std::ostream& os, const std::vector<GpeRow>& rows);

}  // namespace lod
