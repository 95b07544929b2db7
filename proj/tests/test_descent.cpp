#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "shapeopt/errors.hpp"
#include "test_support.hpp"

using namespace shapeopt;
using test_support::PointQuadraticOperator;

namespace {

const Rect kBox{-2.0, -2.0, 2.0, 2.0};

Mat2 random_mat(std::mt19937& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return {u(rng), u(rng), u(rng), u(rng)};
}

Mat2 random_feasible(std::mt19937& rng) {
    std::uniform_real_distribution<double> angle(0.0, 6.2831853071795865);
    std::uniform_real_distribution<double> sigma(0.0, 1.0);
    auto rot = [](double a) {
        return Mat2{std::cos(a), -std::sin(a), std::sin(a), std::cos(a)};
    };
    return rot(angle(rng)) * Mat2{sigma(rng), 0, 0, sigma(rng)} * rot(angle(rng));
}

struct FirstIterate {
    Mesh mesh;
    State state;
    Adjoint adjoint;
    DualVector grad;
};

FirstIterate first_iterate(const std::string& name, int n) {
    const auto& exp = experiment_by_name(name);
    FirstIterate f{exp.initial_mesh.build(n), {}, {}, {}};
    f.state = solve_state(exp.problem, f.mesh);
    f.adjoint = solve_adjoint(exp.problem, f.mesh, f.state);
    f.grad = first_derivative(exp.problem, f.mesh, f.state, f.adjoint);
    return f;
}

}  // namespace

TEST_CASE("svd2 reconstructs and orders singular values") {
    std::mt19937 rng(61);
    for (int i = 0; i < 200; ++i) {
        const Mat2 a = random_mat(rng, 3.0);
        const Svd2 f = svd2(a);
        CHECK(f.s1 >= f.s2);
        CHECK(f.s2 >= 0.0);
        const Mat2 rebuilt = f.u * Mat2{f.s1, 0, 0, f.sign2 * f.s2} * f.v.transpose();
        CHECK((rebuilt - a).frobenius() < 1e-12 * (1.0 + a.frobenius()));
        CHECK(spectral_norm(a) == doctest::Approx(f.s1).epsilon(1e-12));
    }
}

TEST_CASE("spectral ball projection") {
    std::mt19937 rng(67);
    const Mat2 inside{0.3, 0.1, -0.2, 0.4};
    const Mat2 same = project_spectral_ball(inside);
    CHECK((same - inside).frobenius() == 0.0);

    const Mat2 tripled = project_spectral_ball(Mat2::identity() * 3.0);
    CHECK((tripled - Mat2::identity()).frobenius() < 1e-14);

    const Mat2 target = random_mat(rng, 2.5);
    const Mat2 proj = project_spectral_ball(target);
    CHECK(spectral_norm(proj) <= 1.0 + 1e-12);
    const double dist = (target - proj).frobenius();
    int beaten = 0;
    for (int i = 0; i < 1000000; ++i) {
        const Mat2 candidate = random_feasible(rng);
        if (dist > (target - candidate).frobenius() + 1e-12) ++beaten;
    }
    CHECK(beaten == 0);
}

TEST_CASE("admm produces a feasible descent direction") {
    const Mesh mesh = test_support::tiny_omega_mesh();
    DualVector grad = area_constraint_covector(mesh);
    for (std::size_t i = 0; i < grad.values.size(); ++i)
        if (i != 8 && i != 9) grad.values[i] = 0.0;  // keep one interior vertex
    for (double& g : grad.values) g = -g;
    REQUIRE(grad.norm() > 0.0);

    DirectionRequest req;
    req.grad = &grad;
    req.mesh = &mesh;
    AdmmOptions opts;
    opts.tol = 1e-10;
    opts.max_iter = 20000;
    const auto [v, diag] = admm_direction(req, opts);
    CHECK(diag.converged);
    CHECK(grad.pair(v) < 0.0);
    CHECK(max_spectral_jacobian(mesh, v) <= 1.0 + 1e-8);
    for (int i = 0; i < mesh.n_vertices(); ++i)
        if (mesh.on_dirichlet_D[i]) {
            CHECK(v.at(i).x == 0.0);
            CHECK(v.at(i).y == 0.0);
        }
}

TEST_CASE("admm matches a brute-force search on a tiny mesh") {
    const Mesh mesh = test_support::tiny_omega_mesh();
    std::mt19937 rng(71);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DualVector grad(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i)
        if (!mesh.on_dirichlet_D[i]) {
            grad.values[2 * i] = u(rng);
            grad.values[2 * i + 1] = u(rng);
        }

    DirectionRequest req;
    req.grad = &grad;
    req.mesh = &mesh;
    AdmmOptions opts;
    opts.tol = 1e-11;
    opts.max_iter = 50000;
    const auto [v, diag] = admm_direction(req, opts);
    const double admm_obj = grad.pair(v);

    // Sampled feasible fields: scale random directions onto the constraint
    // surface, then refine the best sample locally.
    const std::vector<int> free_vertices{4, 5, 6};
    auto objective_on_ray = [&](const std::array<double, 6>& dir) {
        VectorField w(mesh.n_vertices());
        for (int k = 0; k < 3; ++k)
            w.set(free_vertices[k], {dir[2 * k], dir[2 * k + 1]});
        const double s = max_spectral_jacobian(mesh, w);
        if (s <= 0.0) return 0.0;
        return grad.pair(w) / s;
    };
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::array<double, 6> best{};
    double best_obj = 0.0;
    for (int i = 0; i < 200000; ++i) {
        std::array<double, 6> dir;
        for (double& d : dir) d = gauss(rng);
        const double obj = objective_on_ray(dir);
        if (obj < best_obj) {
            best_obj = obj;
            best = dir;
        }
    }
    double radius = 0.5;
    while (radius > 1e-7) {
        bool improved = false;
        for (int i = 0; i < 2000; ++i) {
            std::array<double, 6> dir = best;
            for (double& d : dir) d += radius * gauss(rng);
            const double obj = objective_on_ray(dir);
            if (obj < best_obj) {
                best_obj = obj;
                best = dir;
                improved = true;
            }
        }
        if (!improved) radius *= 0.5;
    }

    INFO("admm ", admm_obj, " brute force ", best_obj);
    CHECK(admm_obj <= best_obj + 1e-2 * std::abs(best_obj));
    CHECK(std::abs(admm_obj - best_obj) <= 1e-2 * std::abs(best_obj));
}

TEST_CASE("admm with an SPD quadratic reaches the KKT point") {
    const Mesh mesh = test_support::one_free_vertex_mesh();
    PointQuadraticOperator quad;
    quad.q = {2.0, 0.3, 0.3, 1.0};
    quad.vertex = 4;
    quad.n_vertices = mesh.n_vertices();

    DualVector grad(mesh.n_vertices());
    grad.values[8] = 0.01;
    grad.values[9] = -0.015;

    const double t = 0.5;
    DirectionRequest req;
    req.grad = &grad;
    req.hess = &quad;
    req.newton_t = t;
    req.mesh = &mesh;
    AdmmOptions opts;
    opts.tol = 1e-12;
    opts.max_iter = 50000;
    const auto [v, diag] = admm_direction(req, opts);

    // Unconstrained stationary point x = -(tQ)^{-1} g, interior to the ball.
    const Mat2 tq = quad.q * t;
    const double det = tq.det();
    const Mat2 inv{tq(1, 1) / det, -tq(0, 1) / det, -tq(1, 0) / det, tq(0, 0) / det};
    const Vec2 expected = inv * Vec2{-0.01, 0.015};
    VectorField exact(mesh.n_vertices());
    exact.set(4, expected);
    REQUIRE(max_spectral_jacobian(mesh, exact) < 1.0);

    CHECK(v.at(4).x == doctest::Approx(expected.x).epsilon(1e-6));
    CHECK(v.at(4).y == doctest::Approx(expected.y).epsilon(1e-6));
    CHECK(diag.final_objective ==
          doctest::Approx(directional_value(grad, &quad, t, exact)).epsilon(1e-6));
}

TEST_CASE("indefinite quadratic degrades to the first-order direction") {
    const Mesh mesh = test_support::one_free_vertex_mesh();
    PointQuadraticOperator concave;
    concave.q = {-50.0, 0.0, 0.0, -50.0};
    concave.vertex = 4;
    concave.n_vertices = mesh.n_vertices();
    DualVector grad(mesh.n_vertices());
    grad.values[8] = 0.01;
    grad.values[9] = -0.015;

    DirectionRequest req;
    req.grad = &grad;
    req.hess = &concave;
    req.newton_t = 0.5;
    req.mesh = &mesh;
    const auto [v, diag] = admm_direction(req);
    CHECK(diag.fell_back_first_order);
    CHECK(grad.pair(v) < 0.0);
    CHECK(max_spectral_jacobian(mesh, v) <= 1.0 + 1e-8);
}

TEST_CASE("p2 direction satisfies the scaled weak identity") {
    const FirstIterate f = first_iterate("poisson1", 4);
    DirectionRequest req;
    req.grad = &f.grad;
    req.mesh = &f.mesh;
    const VectorField v = p_direction(2, req);
    CHECK(max_spectral_jacobian(f.mesh, v) == doctest::Approx(1.0).epsilon(1e-12));

    // (DV, DW) * kappa = -<grad, W> for the (unknown) normalisation kappa.
    std::mt19937 rng(73);
    std::vector<double> lhs, rhs;
    for (int i = 0; i < 20; ++i) {
        const VectorField w = random_interior_field(f.mesh, rng, 1.0);
        double a = 0.0;
        for (int t = 0; t < f.mesh.n_triangles(); ++t)
            a += tri_geometry(f.mesh, t).area *
                 field_jacobian(f.mesh, v, t).ddot(field_jacobian(f.mesh, w, t));
        lhs.push_back(a);
        rhs.push_back(-f.grad.pair(w));
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        num += lhs[i] * rhs[i];
        den += lhs[i] * lhs[i];
    }
    const double kappa = num / den;
    for (std::size_t i = 0; i < lhs.size(); ++i)
        CHECK(kappa * lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-9).scale(
                                    std::abs(rhs[i]) + 1.0));
}

TEST_CASE("p4 direction is stationary for the quartic problem") {
    const FirstIterate f = first_iterate("poisson1", 8);
    DirectionRequest req;
    req.grad = &f.grad;
    req.mesh = &f.mesh;
    const VectorField v = p_direction(4, req);
    CHECK(max_spectral_jacobian(f.mesh, v) == doctest::Approx(1.0).epsilon(1e-12));

    // The returned field is the normalised solution: for some scale s the
    // field s v satisfies grad + |D(sv)|^2 D(sv) = 0 weakly. Fit s^3 by least
    // squares and check the residual.
    std::mt19937 rng(79);
    std::vector<double> quartic, minus_grad;
    for (int i = 0; i < 30; ++i) {
        const VectorField w = random_interior_field(f.mesh, rng, 1.0);
        double a = 0.0;
        for (int t = 0; t < f.mesh.n_triangles(); ++t) {
            const Mat2 dv = field_jacobian(f.mesh, v, t);
            a += tri_geometry(f.mesh, t).area * dv.frobenius2() *
                 dv.ddot(field_jacobian(f.mesh, w, t));
        }
        quartic.push_back(a);
        minus_grad.push_back(-f.grad.pair(w));
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < quartic.size(); ++i) {
        num += quartic[i] * minus_grad[i];
        den += quartic[i] * quartic[i];
    }
    const double s3 = num / den;
    CHECK(s3 > 0.0);
    for (std::size_t i = 0; i < quartic.size(); ++i)
        CHECK(s3 * quartic[i] == doctest::Approx(minus_grad[i])
                                     .epsilon(1e-7)
                                     .scale(std::abs(minus_grad[i]) + 1.0));
}

TEST_CASE("p_direction rejects bad input") {
    const Mesh mesh = test_support::tiny_omega_mesh();
    DualVector zero(mesh.n_vertices());
    DirectionRequest req;
    req.grad = &zero;
    req.mesh = &mesh;
    CHECK_THROWS_AS(p_direction(2, req), ContractViolation);
    DualVector grad(mesh.n_vertices());
    grad.values[8] = 1.0;
    req.grad = &grad;
    CHECK_THROWS_AS(p_direction(3, req), ContractViolation);
    CHECK_THROWS_AS(directional_value(grad, nullptr, 0.5, VectorField(7)),
                    ContractViolation);
}

TEST_CASE("directional value basics") {
    const Mesh mesh = test_support::one_free_vertex_mesh();
    DualVector grad(mesh.n_vertices());
    grad.values[8] = 2.0;
    VectorField v(mesh.n_vertices());
    CHECK(directional_value(grad, nullptr, 0.0, v) == 0.0);
    v.set(4, {0.5, 0.0});
    CHECK(directional_value(grad, nullptr, 0.0, v) == doctest::Approx(1.0));
}

TEST_CASE("admm is competitive with the normalised hilbert direction") {
    for (const auto& exp : builtin_experiments()) {
        const FirstIterate f = first_iterate(exp.name, 8);
        DirectionRequest req;
        req.grad = &f.grad;
        req.mesh = &f.mesh;
        req.area_constrained = exp.problem.area_constrained;
        const VectorField v2 = p_direction(2, req);
        const auto [vinf, diag] = admm_direction(req);
        const double obj2 = f.grad.pair(v2);
        const double objinf = f.grad.pair(vinf);
        INFO(exp.name, ": admm ", objinf, " p2 ", obj2);
        CHECK(objinf <= obj2 + 1e-2 * std::abs(obj2));
    }
}

TEST_CASE("admm residual trend is non-increasing over 25-iteration windows") {
    const FirstIterate f = first_iterate("nopde1", 8);
    DirectionRequest req;
    req.grad = &f.grad;
    req.mesh = &f.mesh;
    AdmmOptions opts;
    opts.tol = 1e-30;  // force a long run
    opts.max_iter = 300;
    const auto [v, diag] = admm_direction(req, opts);
    (void)v;
    const auto& iters = diag.iterations;
    REQUIRE(iters.size() >= 100);
    for (std::size_t j = 0; j + 25 < iters.size(); ++j)
        CHECK(iters[j + 25].residual <= iters[j].residual * (1.0 + 1e-9));
}

TEST_CASE("admm objective scales linearly with the gradient") {
    const FirstIterate f = first_iterate("nopde1", 8);
    DualVector scaled = f.grad;
    scaled *= 3.0;
    DirectionRequest req;
    req.grad = &f.grad;
    req.mesh = &f.mesh;
    const auto [v1, d1] = admm_direction(req);
    req.grad = &scaled;
    const auto [v3, d3] = admm_direction(req);
    CHECK(d3.final_objective ==
          doctest::Approx(3.0 * d1.final_objective).epsilon(1e-2));
}

TEST_CASE("area-constrained directions have vanishing omega divergence") {
    for (const char* name : {"poisson2", "eigen"}) {
        const FirstIterate f = first_iterate(name, 8);
        DirectionRequest req;
        req.grad = &f.grad;
        req.mesh = &f.mesh;
        req.area_constrained = true;
        const DualVector c = area_constraint_covector(f.mesh);

        for (int p : {2, 4}) {
            const VectorField v = p_direction(p, req);
            double dvnorm = 0.0;
            for (int t = 0; t < f.mesh.n_triangles(); ++t)
                dvnorm += tri_geometry(f.mesh, t).area *
                          field_jacobian(f.mesh, v, t).frobenius2();
            CHECK(std::abs(c.pair(v)) <= 1e-8 * std::sqrt(dvnorm));
        }
        const auto [v, diag] = admm_direction(req);
        double dvnorm = 0.0;
        for (int t = 0; t < f.mesh.n_triangles(); ++t)
            dvnorm += tri_geometry(f.mesh, t).area *
                      field_jacobian(f.mesh, v, t).frobenius2();
        CHECK(std::abs(c.pair(v)) <= 1e-8 * std::sqrt(dvnorm));
    }
}

TEST_CASE("diagnostics export as csv") {
    const FirstIterate f = first_iterate("nopde1", 4);
    DirectionRequest req;
    req.grad = &f.grad;
    req.mesh = &f.mesh;
    const auto [v, diag] = admm_direction(req);
    (void)v;
    std::ostringstream os;
    diag.write_csv(os);
    const std::string text = os.str();
    CHECK(text.find("# iter,tau,residual,objective") == 0);
    std::size_t rows = 0;
    for (char ch : text)
        if (ch == '\n') ++rows;
    CHECK(rows == diag.iterations.size() + 1);
}
