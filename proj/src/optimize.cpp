#include "shapeopt/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <queue>

#include "shapeopt/errors.hpp"
#include "shapeopt/io.hpp"

namespace shapeopt {

Method method_from_string(const std::string& name) {
    if (name == "p2") return Method::P2;
    if (name == "p4") return Method::P4;
    if (name == "inf") return Method::Inf;
    if (name == "newton") return Method::Newton;
    throw ConfigError("unknown method: " + name + " (expected p2, p4, inf, newton)");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::P2: return "p2";
        case Method::P4: return "p4";
        case Method::Inf: return "inf";
        case Method::Newton: return "newton";
    }
    return "?";
}

double armijo_step(const std::function<double(double)>& energy_at, double slope,
                   const ArmijoConfig& cfg) {
    if (!(slope < 0.0))
        throw ContractViolation("armijo_step requires a descent direction");
    if (!(cfg.beta > 0.0 && cfg.beta < 1.0 && cfg.c1 > 0.0 && cfg.c1 < 1.0))
        throw ConfigError("invalid Armijo constants");
    const double base = energy_at(0.0);
    for (double t = cfg.t_init; t >= cfg.t_min; t *= cfg.beta) {
        const double e = energy_at(t);
        if (e <= base + cfg.c1 * t * slope) return t;
    }
    throw LineSearchError("Armijo search fell below the minimal step size");
}

Mesh project_area(const Mesh& mesh, double target) {
    const double area = omega_area(mesh);
    if (!(area > 0.0)) throw ContractViolation("project_area: empty Omega");
    if (!(target > 0.0)) throw ContractViolation("project_area: target must be positive");
    if (std::abs(area - target) <= 1e-14 * target) return mesh;

    // Blend weights: 1 on Omega and its boundary, linearly down to 0 over the
    // two rings of outside vertices nearest to the Omega boundary.
    const auto cls = classify_omega_vertices(mesh);
    std::vector<int> dist(mesh.n_vertices(), -1);
    std::queue<int> frontier;
    std::vector<std::vector<int>> adjacency(mesh.n_vertices());
    for (const auto& tri : mesh.triangles)
        for (int k = 0; k < 3; ++k) {
            adjacency[tri[k]].push_back(tri[(k + 1) % 3]);
            adjacency[tri[(k + 1) % 3]].push_back(tri[k]);
        }
    for (int v = 0; v < mesh.n_vertices(); ++v)
        if (cls[v] != OmegaClass::Outside) {
            dist[v] = 0;
            frontier.push(v);
        }
    while (!frontier.empty()) {
        const int v = frontier.front();
        frontier.pop();
        if (dist[v] >= 2) continue;
        for (int nb : adjacency[v])
            if (dist[nb] < 0) {
                dist[nb] = dist[v] + 1;
                frontier.push(nb);
            }
    }

    const Vec2 center = omega_barycenter(mesh);
    Mesh out = mesh;
    auto dilate = [&](double s) {
        for (int v = 0; v < mesh.n_vertices(); ++v) {
            if (dist[v] < 0 || mesh.on_dirichlet_D[v]) continue;
            const double w = 1.0 - dist[v] / 3.0;
            out.vertices[v] = out.vertices[v] + (w * (s - 1.0)) * (out.vertices[v] - center);
        }
    };
    dilate(std::sqrt(target / area));
    // One corrective pass against accumulated rounding.
    const double reached = omega_area(out);
    dilate(std::sqrt(target / reached));
    if (std::abs(omega_area(out) - target) > 1e-10 * std::max(1.0, target))
        throw ProjectionError("area projection missed the target");
    for (int t = 0; t < out.n_triangles(); ++t)
        if (tri_geometry(out, t).area <= 0.0)
            throw ProjectionError("area projection inverted a triangle");
    return out;
}

namespace {

struct Trial {
    Mesh mesh;
    State state;
    double energy = 0.0;
};

}  // namespace

History run(const RunConfig& cfg) {
    if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
    if (cfg.armijo.t_init >= 1.0) throw ConfigError("t_init must stay below 1");
    const Experiment& exp = experiment_by_name(cfg.experiment);
    const ProblemSpec& problem = exp.problem;
    const double newton_t = cfg.newton_t >= 0.0 ? cfg.newton_t : exp.newton_t;
    if (cfg.method == Method::Newton && !(newton_t > 0.0 && newton_t < 1.0))
        throw ConfigError("newton method requires newton_t in (0, 1)");

    const bool write_files = !cfg.output_dir.empty();
    if (write_files) std::filesystem::create_directories(cfg.output_dir);
    auto mesh_path = [&](int it) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "mesh_%04d.vtk", it);
        return cfg.output_dir + "/" + buf;
    };
    auto state_point_data = [&](const State& s)
        -> std::vector<std::pair<std::string, const std::vector<double>*>> {
        switch (s.kind) {
            case ProblemKind::Poisson:
                return {{"y", &s.y1.values}};
            case ProblemKind::CoupledPoisson:
                return {{"y1", &s.y1.values}, {"y2", &s.y2.values}};
            case ProblemKind::Eigenvalue:
                return {{"z", &s.y1.values}};
            default:
                return {};
        }
    };

    Mesh mesh = exp.initial_mesh.build(cfg.n);
    State state = solve_state(problem, mesh);
    double current_energy = energy(problem, mesh, state);

    History history;
    history.records.push_back({0, current_energy, 0.0, 0.0, 0,
                               omega_area(mesh), min_triangle_quality(mesh), 0.0});
    if (write_files) {
        write_vtk(mesh_path(0), mesh, state_point_data(state));
        write_energy_csv(cfg.output_dir + "/energy.csv", history);
    }

    for (int it = 1; it <= cfg.iterations; ++it) {
        VectorField direction;
        int admm_iterations = 0;
        double direction_objective = 0.0;
        double slope = 0.0;
        try {
            const Adjoint adjoint = solve_adjoint(problem, mesh, state);
            const DualVector grad = first_derivative(problem, mesh, state, adjoint);

            std::optional<HessianOperator> hess;
            DirectionRequest req;
            req.grad = &grad;
            req.mesh = &mesh;
            req.area_constrained = problem.area_constrained;
            req.newton_t = 0.0;
            if (cfg.method == Method::Newton) {
                hess.emplace(problem, mesh, state, adjoint);
                req.hess = &*hess;
                req.newton_t = newton_t;
            }

            switch (cfg.method) {
                case Method::P2:
                    direction = p_direction(2, req);
                    break;
                case Method::P4:
                    direction = p_direction(4, req);
                    break;
                case Method::Inf:
                case Method::Newton: {
                    auto [v, diag] = admm_direction(req, cfg.admm);
                    direction = std::move(v);
                    admm_iterations = static_cast<int>(diag.iterations.size());
                    break;
                }
            }
            slope = grad.pair(direction);
            direction_objective = directional_value(
                grad, cfg.method == Method::Newton ? req.hess : nullptr,
                cfg.method == Method::Newton ? newton_t : 0.0, direction);
        } catch (const Error& err) {
            history.stopped_early = true;
            history.stop_reason = err.what();
            break;
        }
        if (!(slope < 0.0)) {
            history.stopped_early = true;
            history.stop_reason = "direction is not a descent direction";
            break;
        }

        // Trial energies re-solve the state on the deformed (and, for
        // area-constrained problems, projected) mesh.
        std::optional<Trial> accepted;
        double accepted_t = -1.0;
        auto energy_at = [&](double t) -> double {
            if (t == 0.0) return current_energy;
            auto [trial_mesh, report] = deform(mesh, direction, t);
            if (!report.valid) return std::numeric_limits<double>::infinity();
            if (problem.area_constrained) {
                try {
                    trial_mesh = project_area(trial_mesh, problem.target_area);
                } catch (const ProjectionError&) {
                    return std::numeric_limits<double>::infinity();
                }
            }
            Trial trial;
            trial.state = solve_state(problem, trial_mesh);
            trial.energy = energy(problem, trial_mesh, trial.state);
            trial.mesh = std::move(trial_mesh);
            const double value = trial.energy;
            accepted = std::move(trial);
            accepted_t = t;
            return value;
        };

        double step = 0.0;
        try {
            step = armijo_step(energy_at, slope, cfg.armijo);
        } catch (const LineSearchError& err) {
            history.stopped_early = true;
            history.stop_reason = err.what();
            break;
        }
        if (!accepted || accepted_t != step) (void)energy_at(step);

        const double max_dv = max_spectral_jacobian(mesh, direction);
        mesh = std::move(accepted->mesh);
        state = std::move(accepted->state);
        current_energy = accepted->energy;
        history.records.push_back({it, current_energy, step, direction_objective,
                                   admm_iterations, omega_area(mesh),
                                   min_triangle_quality(mesh), max_dv});
        if (write_files) {
            write_vtk(mesh_path(it), mesh, state_point_data(state));
            write_energy_csv(cfg.output_dir + "/energy.csv", history);
        }
    }

    if (write_files) {
        write_energy_csv(cfg.output_dir + "/energy.csv", history);
        write_energy_svg(cfg.output_dir + "/energy.svg", history, exp.known_energy);
    }
    return history;
}

}  // namespace shapeopt
