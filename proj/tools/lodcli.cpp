#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "lod/experiments.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out;
    int threads = 0;          // 0: keep config value
    std::string rhs;          // empty: keep config value
    bool full_patches = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--out", flags.out, "CSV output path (default: stdout)");
    cmd->add_option("--threads", flags.threads, "patch-solver worker count");
    cmd->add_option("--rhs", flags.rhs, "right-hand-side mode: plain|corrected")
        ->check(CLI::IsMember({"plain", "corrected"}));
    cmd->add_flag("--full-patches", flags.full_patches, "grow every patch to the whole domain");
}

lod::ExperimentConfig load_config(const CommonFlags& flags, const std::string& problem) {
    lod::ExperimentConfig c;
    if (!flags.config_path.empty()) {
        std::ifstream in(flags.config_path);
        if (!in) throw std::invalid_argument("cannot open config file " + flags.config_path);
        std::ostringstream text;
        text << in.rdbuf();
        c = lod::config_from_json(text.str());
    } else if (problem == "kronig") {
        c.domain = {0.0, 0.0, 2.0, 3.0};
        c.h = 1.0 / 64.0;
        c.H_list = {1.0 / 8.0};
        c.k_list = {1};
        c.use_potential = true;
        c.potential_type = "kronig";
        c.gamma = 2.0e4;
        c.wave_k = 8;
        c.n_ev = 20;
    }
    c.problem = problem == "kronig" ? "evp" : problem;
    if (!flags.out.empty()) c.out = flags.out;
    if (flags.threads > 0) c.threads = flags.threads;
    if (!flags.rhs.empty()) c.rhs_mode = flags.rhs;
    if (flags.full_patches) c.full_patches = true;
    return c;
}

template <typename Rows, typename Writer>
int emit(const Rows& rows, Writer writer, const std::string& out) {
    if (out.empty()) {
        writer(std::cout, rows);
    } else {
        std::ofstream os(out);
        if (!os) throw std::invalid_argument("cannot open output file " + out);
        writer(os, rows);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-scale finite-element experiment driver"};
    app.require_subcommand(1);

    std::map<std::string, CommonFlags> flags;
    for (const char* name : {"poisson", "bvp", "evp", "kronig", "gpe"}) {
        CLI::App* cmd = app.add_subcommand(name);
        add_common(cmd, flags[name]);
    }

    CLI11_PARSE(app, argc, argv);
    const std::string name = app.get_subcommands().front()->get_name();

    try {
        const lod::ExperimentConfig c = load_config(flags[name], name);
        try {
            if (name == "poisson")
                return emit(lod::run_poisson_convergence(c),
                            [](std::ostream& os, const auto& r) { lod::write_poisson_csv(os, r); },
                            c.out);
            if (name == "bvp")
                return emit(lod::run_bvp(c),
                            [](std::ostream& os, const auto& r) { lod::write_poisson_csv(os, r); },
                            c.out);
            if (name == "evp" || name == "kronig")
                return emit(lod::run_evp(c),
                            [](std::ostream& os, const auto& r) { lod::write_evp_csv(os, r); },
                            c.out);
            return emit(lod::run_gpe(c),
                        [](std::ostream& os, const auto& r) { lod::write_gpe_csv(os, r); },
                        c.out);
        } catch (const std::invalid_argument&) {
            throw;  // config-level problem even if detected late
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
}
