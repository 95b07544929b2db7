#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "shapeopt/errors.hpp"
#include "test_support.hpp"

using namespace shapeopt;

namespace {

const Rect kBox{-2.0, -2.0, 2.0, 2.0};

Mat2 random_mat(std::mt19937& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return {u(rng), u(rng), u(rng), u(rng)};
}

/// Pulled-back diffusion tensor times the volume factor.
Mat2 transformed_form(const Mat2& dv) {
    const Mat2 f = Mat2::identity() + dv;
    const double det = f.det();
    const Mat2 finv{f(1, 1) / det, -f(0, 1) / det, -f(1, 0) / det, f(0, 0) / det};
    return finv * finv.transpose() * det;
}

}  // namespace

TEST_CASE("matrix forms: identities and symmetry") {
    const Mat2 id = Mat2::identity();
    const MatrixForms f = matrix_forms(id, id);
    CHECK(f.Dbrack == doctest::Approx(2.0));
    CHECK(f.calA.frobenius() < 1e-15);

    std::mt19937 rng(31);
    for (int i = 0; i < 20; ++i) {
        const Mat2 a = random_mat(rng, 1.0), b = random_mat(rng, 1.0);
        const MatrixForms ab = matrix_forms(a, b);
        const MatrixForms ba = matrix_forms(b, a);
        CHECK(ab.Dbrack == doctest::Approx(ba.Dbrack).epsilon(1e-13));
        CHECK((ab.Abrack - ba.Abrack).frobenius() < 1e-13);
        CHECK((ab.Abrack - ab.Abrack.transpose()).frobenius() < 1e-13);
        CHECK((ab.calA - ab.calA.transpose()).frobenius() < 1e-13);
    }
}

TEST_CASE("matrix forms match the expansion of the pulled-back form") {
    std::mt19937 rng(37);
    const double h = 1e-4;
    for (int trial = 0; trial < 10; ++trial) {
        const Mat2 dv = random_mat(rng, 0.8), dw = random_mat(rng, 0.8);
        const MatrixForms forms = matrix_forms(dv, dw);

        // First order: d/ds of A(s DV) det at s = 0 equals calA[V].
        const Mat2 fd_first =
            (transformed_form(dv * h) - transformed_form(dv * (-h))) * (1.0 / (2 * h));
        CHECK((fd_first - forms.calA).frobenius() < 1e-6);

        // Mixed second order equals Abrack[V, W].
        const Mat2 fd_mixed =
            (transformed_form(dv * h + dw * h) - transformed_form(dv * h + dw * (-h)) -
             transformed_form(dv * (-h) + dw * h) +
             transformed_form(dv * (-h) + dw * (-h))) *
            (1.0 / (4 * h * h));
        CHECK((fd_mixed - forms.Abrack).frobenius() < 1e-5);

        // Determinant expansion: mixed second order of det(I + sDV + tDW).
        auto det2 = [&](double s, double t) {
            return (Mat2::identity() + dv * s + dw * t).det();
        };
        const double fd_det = (det2(h, h) - det2(h, -h) - det2(-h, h) + det2(-h, -h)) /
                              (4 * h * h);
        CHECK(fd_det == doctest::Approx(forms.Dbrack).epsilon(1e-6));
    }
}

TEST_CASE("first derivative vanishes for the trivial poisson problem") {
    const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 4);
    const ProblemSpec p = ProblemSpec::poisson(test_support::linear_integrand(),
                                               test_support::constant_source(0.0),
                                               false, 0.0);
    const State state = solve_state(p, mesh);
    const Adjoint adj = solve_adjoint(p, mesh, state);
    const DualVector grad = first_derivative(p, mesh, state, adj);
    CHECK(grad.norm() < 1e-14);
}

TEST_CASE("missing adjoint is a contract violation") {
    const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 4);
    const auto& exp = experiment_by_name("poisson2");
    const State state = solve_state(exp.problem, mesh);
    CHECK_THROWS_AS(first_derivative(exp.problem, mesh, state, Adjoint{}),
                    ContractViolation);
}

TEST_CASE("unit integrand derivative is the boundary flux") {
    const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 8);
    const ProblemSpec p =
        ProblemSpec::no_pde(test_support::constant_integrand(1.0), false, 0.0);
    const State state{};
    const DualVector grad = first_derivative(p, mesh, state, Adjoint{});
    std::mt19937 rng(41);
    for (int i = 0; i < 5; ++i) {
        const VectorField v = random_interior_field(mesh, rng, 1.0);
        const double pairing = grad.pair(v);
        CHECK(pairing ==
              doctest::Approx(test_support::boundary_flux(mesh, v)).epsilon(1e-10));
        double divergence = 0.0;
        for (int t = 0; t < mesh.n_triangles(); ++t)
            if (mesh.in_omega[t])
                divergence += tri_geometry(mesh, t).area *
                              field_jacobian(mesh, v, t).trace();
        CHECK(pairing == doctest::Approx(divergence).epsilon(1e-10));
    }
}

TEST_CASE("transported-energy finite differences confirm the first derivative") {
    for (const auto& exp : builtin_experiments()) {
        const AuditResult r = derivative_fd_audit(exp, 8);
        INFO(r.name, ": ", r.detail);
        CHECK(r.pass);
    }
}

TEST_CASE("two assembly routes of the first derivative agree") {
    for (const auto& exp : builtin_experiments()) {
        const Mesh mesh = exp.initial_mesh.build(8);
        const State state = solve_state(exp.problem, mesh);
        const Adjoint adj = solve_adjoint(exp.problem, mesh, state);
        const DualVector expanded = first_derivative(exp.problem, mesh, state, adj);
        DualVector pieces = assemble_JV(exp.problem, mesh, state);
        pieces += assemble_eV(exp.problem, mesh, state, adj);
        double diff = 0.0;
        for (std::size_t i = 0; i < expanded.values.size(); ++i)
            diff = std::max(diff, std::abs(expanded.values[i] - pieces.values[i]));
        INFO(exp.name);
        CHECK(diff <= 1e-10 * std::max(1.0, expanded.norm()));
    }
}

TEST_CASE("sensitivity: zero direction and transported-state differences") {
    const auto& exp = experiment_by_name("poisson1");
    const Mesh mesh = exp.initial_mesh.build(8);
    const State state = solve_state(exp.problem, mesh);

    const VectorField zero(mesh.n_vertices());
    const StatePerturbation none = sensitivity(exp.problem, mesh, state, zero);
    for (double v : none.dy1.values) CHECK(v == 0.0);

    std::mt19937 rng(43);
    const VectorField v = random_interior_field(mesh, rng, 0.5);
    const StatePerturbation ds = sensitivity(exp.problem, mesh, state, v);
    const double eps = 1e-4;
    const auto [moved, report] = deform(mesh, v, eps);
    REQUIRE(report.valid);
    const State moved_state = solve_state(exp.problem, moved);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < mesh.n_vertices(); ++i) {
        const double fd = (moved_state.y1.values[i] - state.y1.values[i]) / eps;
        num += (fd - ds.dy1.values[i]) * (fd - ds.dy1.values[i]);
        den += ds.dy1.values[i] * ds.dy1.values[i];
    }
    CHECK(std::sqrt(num) <= 5e-3 * std::sqrt(den));
}

TEST_CASE("eigenvalue sensitivity equals the first derivative pairing") {
    const auto& exp = experiment_by_name("eigen");
    const Mesh mesh = exp.initial_mesh.build(8);
    const State state = solve_state(exp.problem, mesh);
    const Adjoint adj = solve_adjoint(exp.problem, mesh, state);
    const DualVector grad = first_derivative(exp.problem, mesh, state, adj);
    std::mt19937 rng(47);
    for (int i = 0; i < 3; ++i) {
        const VectorField v = random_interior_field(mesh, rng, 1.0);
        const StatePerturbation ds = sensitivity(exp.problem, mesh, state, v);
        CHECK(ds.dlambda == doctest::Approx(grad.pair(v)).epsilon(1e-10));
    }
}

TEST_CASE("hessian symmetry holds for every preset") {
    for (const auto& exp : builtin_experiments()) {
        const AuditResult r = hessian_symmetry_audit(exp, 8, 20);
        INFO(r.name, ": ", r.detail);
        CHECK(r.pass);
    }
}

TEST_CASE("hessian matches mixed second differences of the transported energy") {
    std::mt19937 rng(53);
    for (const char* name : {"nopde1", "poisson2", "coupled", "eigen"}) {
        const auto& exp = experiment_by_name(name);
        const Mesh mesh = exp.initial_mesh.build(4);
        const State state = solve_state(exp.problem, mesh);
        const Adjoint adj = solve_adjoint(exp.problem, mesh, state);
        const HessianOperator hess(exp.problem, mesh, state, adj);
        const VectorField v = random_interior_field(mesh, rng, 0.8);
        const VectorField w = random_interior_field(mesh, rng, 0.8);
        const double bvw = hess.bilin(v, w);

        const auto& rule = QuadratureRule::order4();
        auto e_st = [&](double s, double t) {
            VectorField combo(mesh.n_vertices());
            for (std::size_t i = 0; i < combo.xy.size(); ++i)
                combo.xy[i] = s * v.xy[i] + t * w.xy[i];
            return transported_energy(exp.problem, mesh, combo, 1.0, rule);
        };
        std::vector<double> hs{4e-3, 2e-3, 1e-3};
        std::vector<double> err;
        for (double h : hs) {
            const double fd =
                (e_st(h, h) - e_st(h, -h) - e_st(-h, h) + e_st(-h, -h)) / (4 * h * h);
            err.push_back(std::abs(fd - bvw));
        }
        INFO(name, " err: ", err[0], " ", err[1], " ", err[2]);
        CHECK(err[2] <= 1e-2 * std::max(1.0, std::abs(bvw)));
        // Quadratic trend until rounding dominates.
        CHECK(err[0] >= 2.0 * err[1] - 1e-11);
    }
}

TEST_CASE("taylor remainder of third order") {
    for (const char* name : {"nopde2", "poisson2", "eigen"}) {
        const AuditResult r = hessian_taylor_audit(experiment_by_name(name), 8);
        INFO(r.name, ": ", r.detail);
        CHECK(r.pass);
    }
}

TEST_CASE("bilin is the pairing of apply") {
    const auto& exp = experiment_by_name("poisson2");
    const Mesh mesh = exp.initial_mesh.build(4);
    const State state = solve_state(exp.problem, mesh);
    const Adjoint adj = solve_adjoint(exp.problem, mesh, state);
    const HessianOperator hess(exp.problem, mesh, state, adj);
    std::mt19937 rng(59);
    const VectorField v = random_interior_field(mesh, rng, 1.0);
    CHECK(hess.bilin(v, v) == doctest::Approx(hess.apply(v).pair(v)).epsilon(1e-14));
}
