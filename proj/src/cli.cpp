#include "shapeopt/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "shapeopt/audit.hpp"
#include "shapeopt/errors.hpp"
#include "shapeopt/io.hpp"
#include "shapeopt/optimize.hpp"

namespace shapeopt {

namespace {

struct CliOptions {
    std::string experiment;
    std::string method = "inf";
    double newton_t = -1.0;
    int iters = 20;
    int n = 16;
    std::string out;
    double tau0 = 1.0;
    double admm_tol = 0.0;
    unsigned seed = 0;
    std::string config_path;
};

std::string normalise_key(std::string key) {
    for (char& c : key)
        if (c == '-') c = '_';
    return key;
}

/// Simple "key = value" override file; a manifest written by `run` parses back
/// unchanged.
void apply_config_file(const std::string& path, CliOptions& opt) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            std::istringstream probe(line);
            std::string leftover;
            if (probe >> leftover)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  " is not key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = normalise_key(trim(line.substr(0, eq)));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "experiment") opt.experiment = value;
            else if (key == "method") opt.method = value;
            else if (key == "newton_t") opt.newton_t = std::stod(value);
            else if (key == "iters") opt.iters = std::stoi(value);
            else if (key == "n") opt.n = std::stoi(value);
            else if (key == "out") opt.out = value;
            else if (key == "tau0") opt.tau0 = std::stod(value);
            else if (key == "admm_tol") opt.admm_tol = std::stod(value);
            else if (key == "seed") opt.seed = static_cast<unsigned>(std::stoul(value));
            else throw ConfigError("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad value for config key " + key + ": " + value);
        }
    }
}

int do_run(CliOptions opt) {
    if (opt.experiment.empty()) throw ConfigError("run requires --experiment");
    const Experiment& exp = experiment_by_name(opt.experiment);

    RunConfig cfg;
    cfg.experiment = opt.experiment;
    cfg.method = method_from_string(opt.method);
    cfg.newton_t = opt.newton_t >= 0.0 ? opt.newton_t : exp.newton_t;
    cfg.iterations = opt.iters;
    cfg.n = opt.n;
    cfg.admm.tau0 = opt.tau0;
    cfg.seed = opt.seed;
    cfg.output_dir = opt.out.empty()
                         ? "out/" + opt.experiment + "_" + opt.method
                         : opt.out;
    // Resolve the automatic tolerance against the initial triangulation so the
    // manifest pins every number that influenced the run.
    cfg.admm.tol = opt.admm_tol > 0.0
                       ? opt.admm_tol
                       : 1e-6 * std::sqrt(static_cast<double>(
                                 exp.initial_mesh.build(cfg.n).n_triangles()));

    std::filesystem::create_directories(cfg.output_dir);
    {
        std::ofstream manifest(cfg.output_dir + "/manifest.txt");
        manifest << "experiment = " << cfg.experiment << '\n';
        manifest << "method = " << method_name(cfg.method) << '\n';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", cfg.newton_t);
        manifest << "newton_t = " << buf << '\n';
        manifest << "iters = " << cfg.iterations << '\n';
        manifest << "n = " << cfg.n << '\n';
        manifest << "out = " << cfg.output_dir << '\n';
        std::snprintf(buf, sizeof(buf), "%.17g", cfg.admm.tau0);
        manifest << "tau0 = " << buf << '\n';
        std::snprintf(buf, sizeof(buf), "%.17g", cfg.admm.tol);
        manifest << "admm_tol = " << buf << '\n';
        manifest << "seed = " << cfg.seed << '\n';
    }

    const History history = run(cfg);
    const auto& last = history.records.back();
    std::cout << cfg.experiment << " (" << method_name(cfg.method) << "): "
              << history.records.size() - 1 << " updates, energy "
              << history.records.front().energy << " -> " << last.energy << '\n';
    if (exp.known_energy)
        std::cout << "  distance to known minimiser energy " << *exp.known_energy
                  << ": " << std::abs(last.energy - *exp.known_energy) << '\n';
    if (history.stopped_early)
        std::cout << "  stopped early: " << history.stop_reason << '\n';
    std::cout << "  outputs in " << cfg.output_dir << '\n';
    return 0;
}

int do_check(const CliOptions& opt) {
    std::vector<std::string> names;
    if (opt.experiment.empty()) {
        for (const auto& e : builtin_experiments()) names.push_back(e.name);
    } else {
        names.push_back(opt.experiment);
    }
    bool all_pass = true;
    for (const auto& name : names) {
        const Experiment& exp = experiment_by_name(name);
        for (const AuditResult& r : run_all_audits(exp, opt.n)) {
            std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail
                      << '\n';
            all_pass = all_pass && r.pass;
        }
    }
    return all_pass ? 0 : 1;
}

int do_mesh(const CliOptions& opt) {
    if (opt.experiment.empty()) throw ConfigError("mesh requires --experiment");
    const Experiment& exp = experiment_by_name(opt.experiment);
    const Mesh mesh = exp.initial_mesh.build(opt.n);
    if (opt.out.empty() || opt.out == "-") {
        write_mesh_text(std::cout, mesh);
    } else {
        write_mesh_text_file(opt.out, mesh);
        std::cout << "wrote " << opt.out << " (" << mesh.n_vertices() << " vertices, "
                  << mesh.n_triangles() << " triangles)\n";
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"2D finite-element shape optimisation with W^{1,inf} descent"};
    app.require_subcommand(1);

    CliOptions opt;
    const std::string experiments = "nopde1 nopde2 poisson1 poisson2 coupled eigen";

    auto add_common = [&](CLI::App* cmd, bool with_run_flags) {
        cmd->add_option("--experiment", opt.experiment,
                        "experiment preset: " + experiments);
        cmd->add_option("--n", opt.n, "grid cells per unit length");
        if (with_run_flags) {
            cmd->add_option("--method", opt.method, "direction method: p2 p4 inf newton");
            cmd->add_option("--newton-t", opt.newton_t,
                            "damping factor (default: experiment preset)");
            cmd->add_option("--iters", opt.iters, "number of shape updates");
            cmd->add_option("--out", opt.out, "output directory");
            cmd->add_option("--tau0", opt.tau0, "initial ADMM penalty");
            cmd->add_option("--admm-tol", opt.admm_tol,
                            "ADMM residual tolerance (default: 1e-6 sqrt(#elements))");
            cmd->add_option("--seed", opt.seed, "seed recorded in the manifest");
            cmd->add_option("--config", opt.config_path,
                            "key = value file overriding the flags");
        }
    };

    CLI::App* cmd_run = app.add_subcommand("run", "run a shape optimisation experiment");
    add_common(cmd_run, true);
    CLI::App* cmd_check =
        app.add_subcommand("check", "run the derivative and Hessian audits");
    add_common(cmd_check, false);  // audits default to the coarse n = 8 grid
    CLI::App* cmd_mesh =
        app.add_subcommand("mesh", "emit an initial mesh in the text format");
    add_common(cmd_mesh, false);
    cmd_mesh->add_option("--out", opt.out, "output file (default: stdout)");

    opt.n = 16;
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (!opt.config_path.empty()) apply_config_file(opt.config_path, opt);
        if (cmd_run->parsed()) return do_run(opt);
        if (cmd_check->parsed()) {
            if (!cmd_check->get_option("--n")->count()) opt.n = 8;
            return do_check(opt);
        }
        if (cmd_mesh->parsed()) return do_mesh(opt);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace shapeopt
