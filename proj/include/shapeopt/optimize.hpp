#pragma once

#include <functional>
#include <string>
#include <vector>

#include "shapeopt/descent.hpp"
#include "shapeopt/problems.hpp"

namespace shapeopt {

struct ArmijoConfig {
    double c1 = 1e-4;
    double beta = 0.5;
    double t_init = 0.9;  // kept below 1 to preserve the bi-Lipschitz margin
    double t_min = 1e-6;
};

enum class Method { P2, P4, Inf, Newton };

Method method_from_string(const std::string& name);
std::string method_name(Method m);

struct RunConfig {
    std::string experiment;
    Method method = Method::Inf;
    double newton_t = -1.0;  // negative selects the experiment preset
    int iterations = 20;
    int n = 16;              // grid cells per unit length
    ArmijoConfig armijo;
    AdmmOptions admm;
    std::string output_dir;  // empty disables file output
    unsigned seed = 0;
};

struct IterationRecord {
    int iter = 0;
    double energy = 0.0;
    double step = 0.0;
    double direction_objective = 0.0;
    int admm_iterations = 0;
    double omega_area = 0.0;
    double min_quality = 0.0;
    double max_dv = 0.0;  // sup-seminorm of the accepted direction
};

struct History {
    std::vector<IterationRecord> records;
    bool stopped_early = false;
    std::string stop_reason;
};

/// Backtracking Armijo rule: largest t in {t_init beta^k} with
/// energy_at(t) <= energy_at(0) + c1 t slope. energy_at returns +inf for
/// invalid trial meshes. Throws LineSearchError below t_min.
double armijo_step(const std::function<double(double)>& energy_at, double slope,
                   const ArmijoConfig& cfg);

/// Restores the Omega area to `target` by a blended dilation about the Omega
/// barycenter. Throws ProjectionError if a triangle would invert.
Mesh project_area(const Mesh& mesh, double target);

/// The outer shape-optimisation loop.
History run(const RunConfig& cfg);

}  // namespace shapeopt
