#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "shapeopt/shape_derivatives.hpp"

namespace shapeopt {

/// Frobenius-nearest point of the spectral unit ball, by singular value clipping.
Mat2 project_spectral_ball(const Mat2& m);

/// Inputs of a direction solve. newton_t > 0 requires hess and newton_t < 1.
struct DirectionRequest {
    const DualVector* grad = nullptr;
    const BilinearOperator* hess = nullptr;
    double newton_t = 0.0;
    bool area_constrained = false;
    const Mesh* mesh = nullptr;
};

struct AdmmOptions {
    double tau0 = 1.0;
    double tol = 0.0;  // <= 0 selects 1e-6 * sqrt(#elements)
    int max_iter = 5000;
    bool adaptive_tau = true;
};

struct AdmmIteration {
    int iter = 0;
    double tau = 0.0;
    double residual = 0.0;
    double objective = 0.0;
};

struct AdmmDiagnostics {
    std::vector<AdmmIteration> iterations;
    bool converged = false;
    bool fell_back_first_order = false;
    double final_objective = 0.0;

    void write_csv(std::ostream& os) const;
};

/// W^{1,inf} direction by ADMM: alternates the spectral-ball projection of the
/// element Jacobians with a quadratic vector-field solve, then a multiplier
/// update, until the combined residual drops below tolerance.
std::pair<VectorField, AdmmDiagnostics> admm_direction(const DirectionRequest& req,
                                                       const AdmmOptions& opts = {});

/// Reference directions: p = 2 is the Dirichlet-inner-product gradient, p = 4 a
/// damped Newton solve of the quartic problem. Scaled to unit sup-seminorm.
VectorField p_direction(int p, const DirectionRequest& req);

/// (t/2) J''[V,V] + J'[V].
double directional_value(const DualVector& grad, const BilinearOperator* hess,
                         double t, const VectorField& v);

/// Covector of the linearised area constraint: pairing gives int_Omega div W.
DualVector area_constraint_covector(const Mesh& mesh);

/// Max over all hold-all triangles of the spectral norm of DV.
double max_spectral_jacobian(const Mesh& mesh, const VectorField& v);

}  // namespace shapeopt
