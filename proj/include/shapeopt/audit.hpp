#pragma once

#include <random>
#include <string>
#include <vector>

#include "shapeopt/problems.hpp"
#include "shapeopt/shape_derivatives.hpp"

namespace shapeopt {

struct AuditResult {
    std::string name;
    bool pass = false;
    double measure = 0.0;  // observed order or worst error, depending on check
    std::string detail;
};

/// Discrete transported energy: the mesh is moved by eps * V, the state is
/// re-solved there and the energy evaluated with `rule`. Independent of the
/// assembled-covector path.
double transported_energy(const ProblemSpec& problem, const Mesh& mesh,
                          const VectorField& v, double eps,
                          const QuadratureRule& rule);

/// Random nodal field vanishing on the hold-all boundary, scaled to the given
/// sup-seminorm (max element spectral norm of DV).
VectorField random_interior_field(const Mesh& mesh, std::mt19937& rng,
                                  double sup_seminorm);

/// Central-difference convergence of the first derivative pairing against the
/// transported energy over eps in {1e-2 ... 1e-5}; passes at observed order
/// >= 1.9 (points at the rounding floor are excluded from the fit).
AuditResult derivative_fd_audit(const Experiment& exp, int n, unsigned seed = 1u);

/// |bilin(V,W) - bilin(W,V)| <= 1e-8 relative over random field pairs.
AuditResult hessian_symmetry_audit(const Experiment& exp, int n, int pairs,
                                   unsigned seed = 2u);

/// Third-order Taylor remainder of the transported energy; observed order
/// >= 2.9.
AuditResult hessian_taylor_audit(const Experiment& exp, int n, unsigned seed = 3u);

/// Integrand and source derivative callbacks against central finite
/// differences at random smooth points of the hold-all.
AuditResult integrand_fd_audit(const Experiment& exp, int points, unsigned seed = 4u);

std::vector<AuditResult> run_all_audits(const Experiment& exp, int n);

}  // namespace shapeopt
