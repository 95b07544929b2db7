#include "shapeopt/problems.hpp"

#include <cmath>
#include <numbers>

#include "shapeopt/errors.hpp"

namespace shapeopt {

namespace {

constexpr double kPi = std::numbers::pi;

Integrand nopde1_integrand() {
    // Z is continuous across the region seams; ties go to the cosine region.
    struct ZData {
        double z;
        Vec2 grad;
        Mat2 hess;
    };
    auto zdata = [](const Vec2& x) -> ZData {
        const double h = 0.5 * kPi;
        if (std::abs(x.x) <= 1.0 && std::abs(x.y) <= 1.0) {
            const double c1 = std::cos(h * x.x), s1 = std::sin(h * x.x);
            const double c2 = std::cos(h * x.y), s2 = std::sin(h * x.y);
            return {c1 * c2,
                    {-h * s1 * c2, -h * c1 * s2},
                    {-h * h * c1 * c2, h * h * s1 * s2, h * h * s1 * s2, -h * h * c1 * c2}};
        }
        if (std::abs(x.x) > 1.0 && std::abs(x.y) < 1.0)
            return {0.25 * kPi * (1.0 - x.x * x.x), {-h * x.x, 0.0}, {-h, 0.0, 0.0, 0.0}};
        if (std::abs(x.x) < 1.0 && std::abs(x.y) > 1.0)
            return {0.25 * kPi * (1.0 - x.y * x.y), {0.0, -h * x.y}, {0.0, 0.0, 0.0, -h}};
        return {0.25 * kPi * (2.0 - x.x * x.x - x.y * x.y),
                {-h * x.x, -h * x.y},
                {-h, 0.0, 0.0, -h}};
    };
    Integrand j;
    j.j = [zdata](const Vec2& x, double) { return -zdata(x).z; };
    j.j_x = [zdata](const Vec2& x, double) { return -1.0 * zdata(x).grad; };
    j.j_y = [](const Vec2&, double) { return 0.0; };
    j.j_yy = [](const Vec2&, double) { return 0.0; };
    j.j_yx = [](const Vec2&, double) { return Vec2{0.0, 0.0}; };
    j.j_xx = [zdata](const Vec2& x, double) { return -1.0 * zdata(x).hess; };
    return j;
}

Integrand nopde2_integrand(double eps) {
    struct ZData {
        double z;
        Vec2 grad;
        Mat2 hess;
    };
    auto zdata = [eps](const Vec2& x) -> ZData {
        const double sp = x.x + x.y, sm = x.x - x.y;
        const double rp = std::sqrt(sp * sp + eps), rm = std::sqrt(sm * sm + eps);
        const double dp = sp / rp, dm = sm / rm;
        const double cp = eps / (rp * rp * rp), cm = eps / (rm * rm * rm);
        return {rp + rm,
                {dp + dm, dp - dm},
                {cp + cm, cp - cm, cp - cm, cp + cm}};
    };
    Integrand j;
    j.j = [zdata](const Vec2& x, double) {
        const double z = zdata(x).z;
        return 0.5 * z * z;
    };
    j.j_x = [zdata](const Vec2& x, double) {
        const ZData d = zdata(x);
        return d.z * d.grad;
    };
    j.j_y = [](const Vec2&, double) { return 0.0; };
    j.j_yy = [](const Vec2&, double) { return 0.0; };
    j.j_yx = [](const Vec2&, double) { return Vec2{0.0, 0.0}; };
    j.j_xx = [zdata](const Vec2& x, double) {
        const ZData d = zdata(x);
        return Mat2::outer(d.grad, d.grad) + d.z * d.hess;
    };
    return j;
}

Integrand linear_in_y_integrand() {
    Integrand j;
    j.j = [](const Vec2&, double y) { return y; };
    j.j_x = [](const Vec2&, double) { return Vec2{0.0, 0.0}; };
    j.j_y = [](const Vec2&, double) { return 1.0; };
    j.j_yy = [](const Vec2&, double) { return 0.0; };
    j.j_yx = [](const Vec2&, double) { return Vec2{0.0, 0.0}; };
    j.j_xx = [](const Vec2&, double) { return Mat2{}; };
    return j;
}

/// j = 0.5 (y - y_d)^2 for a given target profile y_d.
Integrand tracking_integrand(std::function<double(const Vec2&)> yd,
                             std::function<Vec2(const Vec2&)> grad_yd,
                             std::function<Mat2(const Vec2&)> hess_yd) {
    Integrand j;
    j.j = [yd](const Vec2& x, double y) {
        const double r = y - yd(x);
        return 0.5 * r * r;
    };
    j.j_x = [yd, grad_yd](const Vec2& x, double y) {
        return -(y - yd(x)) * grad_yd(x);
    };
    j.j_y = [yd](const Vec2& x, double y) { return y - yd(x); };
    j.j_yy = [](const Vec2&, double) { return 1.0; };
    j.j_yx = [grad_yd](const Vec2& x, double) { return -1.0 * grad_yd(x); };
    j.j_xx = [yd, grad_yd, hess_yd](const Vec2& x, double y) {
        return Mat2::outer(grad_yd(x), grad_yd(x)) - (y - yd(x)) * hess_yd(x);
    };
    return j;
}

SourceData poisson1_source() {
    SourceData f;
    f.F = [](const Vec2& x) {
        const double q = x.x + 0.5 - x.y * x.y;
        return 2.5 * q * q + x.x * x.x + x.y * x.y - 1.0;
    };
    f.grad_F = [](const Vec2& x) {
        const double q = x.x + 0.5 - x.y * x.y;
        return Vec2{5.0 * q + 2.0 * x.x, -10.0 * x.y * q + 2.0 * x.y};
    };
    f.hess_F = [](const Vec2& x) {
        const double q = x.x + 0.5 - x.y * x.y;
        return Mat2{7.0, -10.0 * x.y, -10.0 * x.y, -10.0 * q + 20.0 * x.y * x.y + 2.0};
    };
    return f;
}

SourceData constant_source(double value) {
    SourceData f;
    f.F = [value](const Vec2&) { return value; };
    f.grad_F = [](const Vec2&) { return Vec2{0.0, 0.0}; };
    f.hess_F = [](const Vec2&) { return Mat2{}; };
    return f;
}

// One-dimensional factors of (1 - s^2)^3 and their derivatives, expanded.
double g0(double s) { return 1.0 + s * s * (-3.0 + s * s * (3.0 - s * s)); }
double g1(double s) { return s * (-6.0 + s * s * (12.0 - 6.0 * s * s)); }
double g2(double s) { return -6.0 + s * s * (36.0 - 30.0 * s * s); }
double g3(double s) { return s * (72.0 - 120.0 * s * s); }
double g4(double s) { return 72.0 - 360.0 * s * s; }
double g5(double s) { return -720.0 * s; }
double g6(double) { return -720.0; }

SourceData coupled_source() {
    // F = Laplacian^2 of (1-x^2)^3 (1-y^2)^3.
    SourceData f;
    f.F = [](const Vec2& p) {
        return g4(p.x) * g0(p.y) + 2.0 * g2(p.x) * g2(p.y) + g0(p.x) * g4(p.y);
    };
    f.grad_F = [](const Vec2& p) {
        return Vec2{g5(p.x) * g0(p.y) + 2.0 * g3(p.x) * g2(p.y) + g1(p.x) * g4(p.y),
                    g4(p.x) * g1(p.y) + 2.0 * g2(p.x) * g3(p.y) + g0(p.x) * g5(p.y)};
    };
    f.hess_F = [](const Vec2& p) {
        const double hxx =
            g6(p.x) * g0(p.y) + 2.0 * g4(p.x) * g2(p.y) + g2(p.x) * g4(p.y);
        const double hxy =
            g5(p.x) * g1(p.y) + 2.0 * g3(p.x) * g3(p.y) + g1(p.x) * g5(p.y);
        const double hyy =
            g4(p.x) * g2(p.y) + 2.0 * g2(p.x) * g4(p.y) + g0(p.x) * g6(p.y);
        return Mat2{hxx, hxy, hxy, hyy};
    };
    return f;
}

std::vector<Experiment> make_experiments() {
    const Rect box{-2.0, -2.0, 2.0, 2.0};
    const double r_area4 = 2.0 / std::sqrt(kPi);  // ball of area 4
    std::vector<Experiment> out;

    {
        Experiment e;
        e.name = "nopde1";
        e.problem = ProblemSpec::no_pde(nopde1_integrand(), false, 0.0);
        e.problem.smooth_at = [](const Vec2& x) {
            return std::abs(std::abs(x.x) - 1.0) > 0.05 &&
                   std::abs(std::abs(x.y) - 1.0) > 0.05;
        };
        e.initial_mesh = {MeshRecipe::Kind::Rectangle, box, {-1.5, -1.0, -1.0, 1.0}, {}, 0, 0};
        e.newton_t = 0.0625;
        e.known_energy = -16.0 / (kPi * kPi);
        out.push_back(std::move(e));
    }
    {
        Experiment e;
        e.name = "nopde2";
        e.problem = ProblemSpec::no_pde(nopde2_integrand(1e-4), true, 4.0);
        e.problem.smooth_at = [](const Vec2& x) {
            return std::abs(x.x + x.y) > 0.05 && std::abs(x.x - x.y) > 0.05;
        };
        e.initial_mesh = {MeshRecipe::Kind::Ellipse, box, {}, {0.0, 0.0}, r_area4, r_area4};
        e.newton_t = 0.125;
        e.known_energy = 4.0;
        out.push_back(std::move(e));
    }
    {
        Experiment e;
        e.name = "poisson1";
        e.problem = ProblemSpec::poisson(linear_in_y_integrand(), poisson1_source(),
                                         false, 0.0);
        e.initial_mesh = {MeshRecipe::Kind::Ellipse, box, {}, {0.0, 0.0},
                          2.0 / std::sqrt(kPi), 1.0 / std::sqrt(kPi)};
        e.newton_t = 0.125;
        out.push_back(std::move(e));
    }
    {
        Experiment e;
        e.name = "poisson2";
        auto yd = [](const Vec2& x) { return 4.0 / kPi - (x.x * x.x + x.y * x.y); };
        auto grad_yd = [](const Vec2& x) { return Vec2{-2.0 * x.x, -2.0 * x.y}; };
        auto hess_yd = [](const Vec2&) { return Mat2{-2.0, 0.0, 0.0, -2.0}; };
        e.problem = ProblemSpec::poisson(tracking_integrand(yd, grad_yd, hess_yd),
                                         constant_source(1.0), true, 4.0);
        e.initial_mesh = {MeshRecipe::Kind::Rectangle, box, {-1.0, -1.0, 1.0, 1.0}, {}, 0, 0};
        e.newton_t = 0.125;
        e.known_energy = 6.0 / (kPi * kPi);
        out.push_back(std::move(e));
    }
    {
        Experiment e;
        e.name = "coupled";
        auto yd = [](const Vec2& x) { return 0.05 + g0(x.x) * g0(x.y); };
        auto grad_yd = [](const Vec2& x) {
            return Vec2{g1(x.x) * g0(x.y), g0(x.x) * g1(x.y)};
        };
        auto hess_yd = [](const Vec2& x) {
            return Mat2{g2(x.x) * g0(x.y), g1(x.x) * g1(x.y), g1(x.x) * g1(x.y),
                        g0(x.x) * g2(x.y)};
        };
        e.problem = ProblemSpec::coupled_poisson(
            tracking_integrand(yd, grad_yd, hess_yd), coupled_source(), true, 4.0);
        e.initial_mesh = {MeshRecipe::Kind::Rectangle, box, {-1.0, -1.0, 1.0, 1.0}, {}, 0, 0};
        e.newton_t = 0.0625;
        e.known_energy = 0.005;
        out.push_back(std::move(e));
    }
    {
        Experiment e;
        e.name = "eigen";
        e.problem = ProblemSpec::eigenvalue(4.0);
        e.initial_mesh = {MeshRecipe::Kind::Rectangle, box, {-1.0, -1.0, 1.0, 1.0}, {}, 0, 0};
        e.newton_t = 0.125;
        e.known_energy = 4.542103371143974;  // first Bessel zero squared times pi/4
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

ProblemSpec ProblemSpec::no_pde(Integrand j, bool area_constrained, double target_area) {
    ProblemSpec p;
    p.kind = ProblemKind::NoPde;
    p.integrand = std::move(j);
    p.area_constrained = area_constrained;
    p.target_area = target_area;
    return p;
}

ProblemSpec ProblemSpec::poisson(Integrand j, SourceData f, bool area_constrained,
                                 double target_area) {
    ProblemSpec p;
    p.kind = ProblemKind::Poisson;
    p.integrand = std::move(j);
    p.source = std::move(f);
    p.area_constrained = area_constrained;
    p.target_area = target_area;
    return p;
}

ProblemSpec ProblemSpec::coupled_poisson(Integrand j, SourceData f,
                                         bool area_constrained, double target_area) {
    ProblemSpec p = poisson(std::move(j), std::move(f), area_constrained, target_area);
    p.kind = ProblemKind::CoupledPoisson;
    return p;
}

ProblemSpec ProblemSpec::eigenvalue(double target_area) {
    ProblemSpec p;
    p.kind = ProblemKind::Eigenvalue;
    p.area_constrained = true;
    p.target_area = target_area;
    return p;
}

Mesh MeshRecipe::build(int n) const {
    if (kind == Kind::Rectangle) return generate_box_with_rectangle(box, inner, n);
    return generate_box_with_disk(box, center, semiaxis_x, semiaxis_y, n);
}

const std::vector<Experiment>& builtin_experiments() {
    static const std::vector<Experiment> experiments = make_experiments();
    return experiments;
}

const Experiment& experiment_by_name(const std::string& name) {
    for (const auto& e : builtin_experiments())
        if (e.name == name) return e;
    throw ConfigError("unknown experiment: " + name);
}

State solve_state(const ProblemSpec& problem, const Mesh& mesh) {
    State state;
    state.kind = problem.kind;
    if (problem.kind == ProblemKind::NoPde) return state;

    const FeMatrix stiffness = assemble_stiffness(mesh, Support::Omega);
    if (stiffness.dofs.count() == 0)
        throw ContractViolation("solve_state: Omega has no interior vertices");
    const QuadratureRule& rule = QuadratureRule::order4();

    switch (problem.kind) {
        case ProblemKind::Poisson: {
            const auto& src = problem.source.value();
            const Eigen::VectorXd b = assemble_load(
                mesh, [&](const QuadPoint& q) { return src.F(q.x); }, rule,
                stiffness.dofs);
            state.y1 = expand_from_dofs(solve_spd(stiffness, b), stiffness.dofs,
                                        mesh.n_vertices());
            break;
        }
        case ProblemKind::CoupledPoisson: {
            const auto& src = problem.source.value();
            const SpdSolver solver(stiffness);
            const Eigen::VectorXd b2 = assemble_load(
                mesh, [&](const QuadPoint& q) { return src.F(q.x); }, rule,
                stiffness.dofs);
            const Eigen::VectorXd y2 = solver.solve(b2);
            const FeMatrix mass = assemble_mass(mesh, Support::Omega);
            const Eigen::VectorXd y1 = solver.solve(mass.mat * y2);
            state.y1 = expand_from_dofs(y1, stiffness.dofs, mesh.n_vertices());
            state.y2 = expand_from_dofs(y2, stiffness.dofs, mesh.n_vertices());
            break;
        }
        case ProblemKind::Eigenvalue: {
            const FeMatrix mass = assemble_mass(mesh, Support::Omega);
            const EigenPair pair = smallest_eigenpair(stiffness, mass, mesh);
            state.y1 = pair.z;
            state.lambda = pair.lambda;
            state.simplicity_warning = pair.simplicity_warning;
            state.gap_ratio = pair.gap_ratio;
            break;
        }
        default:
            break;
    }
    return state;
}

Adjoint solve_adjoint(const ProblemSpec& problem, const Mesh& mesh, const State& state) {
    Adjoint adjoint;
    adjoint.kind = problem.kind;
    if (problem.kind == ProblemKind::NoPde) return adjoint;

    const FeMatrix stiffness = assemble_stiffness(mesh, Support::Omega);
    const QuadratureRule& rule = QuadratureRule::order4();

    switch (problem.kind) {
        case ProblemKind::Poisson: {
            const auto& integrand = problem.integrand.value();
            const Eigen::VectorXd b = assemble_load(
                mesh,
                [&](const QuadPoint& q) {
                    return -integrand.j_y(q.x, eval_scalar(mesh, state.y1, q));
                },
                rule, stiffness.dofs);
            adjoint.p1 = expand_from_dofs(solve_spd(stiffness, b), stiffness.dofs,
                                          mesh.n_vertices());
            break;
        }
        case ProblemKind::CoupledPoisson: {
            const auto& integrand = problem.integrand.value();
            const SpdSolver solver(stiffness);
            const Eigen::VectorXd b2 = assemble_load(
                mesh,
                [&](const QuadPoint& q) {
                    return -integrand.j_y(q.x, eval_scalar(mesh, state.y1, q));
                },
                rule, stiffness.dofs);
            const Eigen::VectorXd p2 = solver.solve(b2);
            const FeMatrix mass = assemble_mass(mesh, Support::Omega);
            const Eigen::VectorXd p1 = solver.solve(mass.mat * p2);
            adjoint.p1 = expand_from_dofs(p1, stiffness.dofs, mesh.n_vertices());
            adjoint.p2 = expand_from_dofs(p2, stiffness.dofs, mesh.n_vertices());
            break;
        }
        case ProblemKind::Eigenvalue: {
            // The adjoint is (q, mu) = (z, 0); verify the defining relation.
            const FeMatrix mass = assemble_mass(mesh, Support::Omega);
            const Eigen::VectorXd z = restrict_to_dofs(state.y1, stiffness.dofs);
            const Eigen::VectorXd r = stiffness.mat * z - state.lambda * (mass.mat * z);
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> minv(mass.mat);
            const double res = std::sqrt(r.dot(minv.solve(r)));
            const double norm_defect = std::abs(1.0 - z.dot(mass.mat * z));
            if (res > 1e-8 * std::max(1.0, state.lambda) || norm_defect > 1e-8)
                throw SolverError("eigenvalue adjoint relation violated");
            adjoint.p1 = state.y1;
            adjoint.mu = 0.0;
            break;
        }
        default:
            break;
    }
    return adjoint;
}

double energy(const ProblemSpec& problem, const Mesh& mesh, const State& state) {
    return energy(problem, mesh, state, QuadratureRule::order2());
}

double energy(const ProblemSpec& problem, const Mesh& mesh, const State& state,
              const QuadratureRule& rule) {
    if (problem.kind == ProblemKind::Eigenvalue) return state.lambda;
    const auto& integrand = problem.integrand.value();
    const bool has_state = problem.kind != ProblemKind::NoPde;
    return integrate(
        mesh,
        [&](const QuadPoint& q) {
            const double y = has_state ? eval_scalar(mesh, state.y1, q) : 0.0;
            return integrand.j(q.x, y);
        },
        rule, Support::Omega);
}

}  // namespace shapeopt
