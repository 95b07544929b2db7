#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "shapeopt/fem.hpp"
#include "shapeopt/fields.hpp"
#include "shapeopt/mesh.hpp"

namespace shapeopt {

/// Pointwise integrand j(x, y) with the derivatives required by the first and
/// second shape derivative formulas.
struct Integrand {
    std::function<double(const Vec2&, double)> j;
    std::function<Vec2(const Vec2&, double)> j_x;
    std::function<double(const Vec2&, double)> j_y;
    std::function<double(const Vec2&, double)> j_yy;
    std::function<Vec2(const Vec2&, double)> j_yx;
    std::function<Mat2(const Vec2&, double)> j_xx;
};

/// PDE right-hand side F with gradient and Hessian.
struct SourceData {
    std::function<double(const Vec2&)> F;
    std::function<Vec2(const Vec2&)> grad_F;
    std::function<Mat2(const Vec2&)> hess_F;
};

enum class ProblemKind { NoPde, Poisson, CoupledPoisson, Eigenvalue };

struct ProblemSpec {
    ProblemKind kind = ProblemKind::NoPde;
    std::optional<Integrand> integrand;  // absent for Eigenvalue
    std::optional<SourceData> source;    // absent for NoPde and Eigenvalue
    bool area_constrained = false;
    double target_area = 0.0;
    /// Region in which the integrand/source are smooth enough for the
    /// finite-difference consistency audit (picks sample points).
    std::function<bool(const Vec2&)> smooth_at = [](const Vec2&) { return true; };

    static ProblemSpec no_pde(Integrand j, bool area_constrained, double target_area);
    static ProblemSpec poisson(Integrand j, SourceData f, bool area_constrained,
                               double target_area);
    static ProblemSpec coupled_poisson(Integrand j, SourceData f, bool area_constrained,
                                       double target_area);
    static ProblemSpec eigenvalue(double target_area);
};

/// Discrete state per problem kind. Poisson: y1; coupled: (y1, y2) with y2 the
/// auxiliary Poisson variable; eigenvalue: y1 = z and lambda.
struct State {
    ProblemKind kind = ProblemKind::NoPde;
    ScalarField y1;
    ScalarField y2;
    double lambda = 0.0;
    bool simplicity_warning = false;
    double gap_ratio = 0.0;
};

/// Discrete adjoint mirroring State; eigenvalue adjoint is (q, mu) = (z, 0).
struct Adjoint {
    ProblemKind kind = ProblemKind::NoPde;
    ScalarField p1;
    ScalarField p2;
    double mu = 0.0;
};

State solve_state(const ProblemSpec& problem, const Mesh& mesh);
Adjoint solve_adjoint(const ProblemSpec& problem, const Mesh& mesh, const State& state);

/// Shape energy with the order-2 quadrature used for reporting; the overload
/// with an explicit rule serves the derivative audits.
double energy(const ProblemSpec& problem, const Mesh& mesh, const State& state);
double energy(const ProblemSpec& problem, const Mesh& mesh, const State& state,
              const QuadratureRule& rule);

struct MeshRecipe {
    enum class Kind { Rectangle, Ellipse } kind = Kind::Rectangle;
    Rect box;
    Rect inner;       // Rectangle
    Vec2 center;      // Ellipse
    double semiaxis_x = 0.0, semiaxis_y = 0.0;

    Mesh build(int n) const;
};

struct Experiment {
    std::string name;
    ProblemSpec problem;
    MeshRecipe initial_mesh;
    double newton_t = 0.0;
    std::optional<double> known_energy;  // minimiser energy when known in closed form
};

/// The six benchmark experiments: nopde1 nopde2 poisson1 poisson2 coupled eigen.
const std::vector<Experiment>& builtin_experiments();
const Experiment& experiment_by_name(const std::string& name);

}  // namespace shapeopt
