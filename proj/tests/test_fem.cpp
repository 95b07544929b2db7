#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "shapeopt/errors.hpp"
#include "test_support.hpp"

using namespace shapeopt;

namespace {

const Rect kBox{-2.0, -2.0, 2.0, 2.0};
constexpr double kPi = std::numbers::pi;

Mesh reference_triangle_mesh() {
    Mesh m;
    m.vertices = {{0, 0}, {1, 0}, {0, 1}};
    m.triangles = {{0, 1, 2}};
    m.in_omega = {1};
    m.on_dirichlet_D = {1, 1, 1};
    return m;
}

double exact_ref_monomial(int a, int b) {
    // integral over the reference triangle of x^a y^b = a! b! / (a + b + 2)!
    auto fact = [](int k) {
        double f = 1.0;
        for (int i = 2; i <= k; ++i) f *= i;
        return f;
    };
    return fact(a) * fact(b) / fact(a + b + 2);
}

/// Dense unconstrained assembly from the element formulas (test-side oracle).
void dense_assembly(const Mesh& mesh, Support support, Eigen::MatrixXd& stiff,
                    Eigen::MatrixXd& mass) {
    const int nv = mesh.n_vertices();
    stiff = Eigen::MatrixXd::Zero(nv, nv);
    mass = Eigen::MatrixXd::Zero(nv, nv);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (support == Support::Omega && !mesh.in_omega[t]) continue;
        const TriGeometry g = tri_geometry(mesh, t);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                stiff(mesh.triangles[t][i], mesh.triangles[t][j]) +=
                    g.area * g.grad[i].dot(g.grad[j]);
                mass(mesh.triangles[t][i], mesh.triangles[t][j]) +=
                    g.area / 12.0 * (i == j ? 2.0 : 1.0);
            }
    }
}

}  // namespace

TEST_CASE("element stiffness of the unit right triangle") {
    const Mesh m = reference_triangle_mesh();
    const TriGeometry g = tri_geometry(m, 0);
    const double expected[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(g.area * g.grad[i].dot(g.grad[j]) ==
                  doctest::Approx(expected[i][j]).epsilon(1e-14));
}

TEST_CASE("element matrices: zero stiffness row sums, quadrature mass oracle") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Mesh m = reference_triangle_mesh();
        for (auto& v : m.vertices) v = {v.x + 0.3 * u(rng), v.y + 0.3 * u(rng)};
        if (tri_geometry(m, 0).area <= 0.0) continue;
        const TriGeometry g = tri_geometry(m, 0);
        for (int i = 0; i < 3; ++i) {
            double row = 0.0;
            for (int j = 0; j < 3; ++j) row += g.area * g.grad[i].dot(g.grad[j]);
            CHECK(std::abs(row) < 1e-13);
        }
        // Mass entries against the order-2 quadrature of phi_i phi_j.
        const auto& rule = QuadratureRule::order2();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double q = 0.0;
                for (std::size_t k = 0; k < rule.points.size(); ++k)
                    q += rule.weights[k] * rule.points[k][i] * rule.points[k][j];
                CHECK(g.area / 12.0 * (i == j ? 2.0 : 1.0) ==
                      doctest::Approx(g.area * q).epsilon(1e-14));
            }
    }
}

TEST_CASE("assembled matrices match the dense oracle and partition of unity") {
    const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 3);
    Eigen::MatrixXd stiff, mass;
    dense_assembly(mesh, Support::Omega, stiff, mass);

    CHECK(Eigen::VectorXd::Ones(mesh.n_vertices()).dot(
              mass * Eigen::VectorXd::Ones(mesh.n_vertices())) ==
          doctest::Approx(omega_area(mesh)).epsilon(1e-13));

    const FeMatrix k = assemble_stiffness(mesh, Support::Omega);
    const FeMatrix m = assemble_mass(mesh, Support::Omega);
    for (int i = 0; i < k.dofs.count(); ++i)
        for (int j = 0; j < k.dofs.count(); ++j) {
            const int vi = k.dofs.dof_to_vertex[i];
            const int vj = k.dofs.dof_to_vertex[j];
            CHECK(k.mat.coeff(i, j) == doctest::Approx(stiff(vi, vj)).epsilon(1e-13));
            CHECK(m.mat.coeff(i, j) == doctest::Approx(mass(vi, vj)).epsilon(1e-13));
        }

    // Symmetry and positive definiteness of the mass matrix.
    CHECK((Eigen::MatrixXd(m.mat) - Eigen::MatrixXd(m.mat).transpose()).norm() <
          1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(m.mat));
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("assembly is independent of triangle enumeration order") {
    Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 4);
    Mesh shuffled = mesh;
    std::mt19937 rng(5);
    std::vector<int> perm(mesh.n_triangles());
    for (int i = 0; i < mesh.n_triangles(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < mesh.n_triangles(); ++i) {
        shuffled.triangles[i] = mesh.triangles[perm[i]];
        shuffled.in_omega[i] = mesh.in_omega[perm[i]];
    }
    const FeMatrix a = assemble_stiffness(mesh, Support::Omega);
    const FeMatrix b = assemble_stiffness(shuffled, Support::Omega);
    const Eigen::MatrixXd diff = Eigen::MatrixXd(a.mat) - Eigen::MatrixXd(b.mat);
    CHECK(diff.norm() <= 1e-13 * Eigen::MatrixXd(a.mat).norm());
}

TEST_CASE("poisson solve on the square matches the series maximum") {
    const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 32);
    ProblemSpec p = ProblemSpec::poisson(test_support::linear_integrand(),
                                         test_support::constant_source(1.0), false, 0);
    const State state = solve_state(p, mesh);
    double umax = 0.0;
    for (double v : state.y1.values) umax = std::max(umax, v);

    // Series solution of -Laplace u = 1 on (-1,1)^2 evaluated at the centre.
    double series = 0.0;
    for (int k = 1; k < 400; k += 2) {
        const double sigma = (k % 4 == 1) ? 1.0 : -1.0;
        series += 16.0 * sigma / (k * k * k * kPi * kPi * kPi) *
                  (1.0 - 1.0 / std::cosh(k * kPi / 2.0));
    }
    CHECK(series == doctest::Approx(0.2946854).epsilon(1e-4));
    CHECK(umax == doctest::Approx(series).epsilon(0.02));
}

TEST_CASE("galerkin orthogonality holds to solver tolerance") {
    const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 8);
    const FeMatrix k = assemble_stiffness(mesh, Support::Omega);
    const Eigen::VectorXd b = assemble_load(
        mesh, [](const QuadPoint& q) { return q.x.x + 2.0; }, QuadratureRule::order4(),
        k.dofs);
    const Eigen::VectorXd y = solve_spd(k, b);
    CHECK((k.mat * y - b).lpNorm<Eigen::Infinity>() <= 1e-10 * b.norm());
}

TEST_CASE("solve_spd identity, zero rhs and dense oracle") {
    FeMatrix ident;
    ident.mat = Eigen::SparseMatrix<double>(5, 5);
    ident.mat.setIdentity();
    ident.dofs.dof_to_vertex = {0, 1, 2, 3, 4};
    ident.dofs.vertex_to_dof = {0, 1, 2, 3, 4};
    Eigen::VectorXd b(5);
    b << 1, -2, 3, 0.5, -0.25;
    CHECK((solve_spd(ident, b) - b).norm() == 0.0);
    CHECK(solve_spd(ident, Eigen::VectorXd::Zero(5)).norm() == 0.0);

    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd r(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) r(i, j) = u(rng);
    const Eigen::MatrixXd spd = r.transpose() * r + Eigen::MatrixXd::Identity(5, 5);
    FeMatrix a;
    a.mat = spd.sparseView();
    a.dofs = ident.dofs;

    // Dense Gaussian elimination oracle with partial pivoting.
    Eigen::MatrixXd aug(5, 6);
    aug.leftCols(5) = spd;
    aug.col(5) = b;
    for (int c = 0; c < 5; ++c) {
        int piv = c;
        for (int r2 = c + 1; r2 < 5; ++r2)
            if (std::abs(aug(r2, c)) > std::abs(aug(piv, c))) piv = r2;
        aug.row(c).swap(aug.row(piv));
        for (int r2 = c + 1; r2 < 5; ++r2) {
            const double f = aug(r2, c) / aug(c, c);
            aug.row(r2) -= f * aug.row(c);
        }
    }
    Eigen::VectorXd x(5);
    for (int r2 = 4; r2 >= 0; --r2) {
        double s = aug(r2, 5);
        for (int c = r2 + 1; c < 5; ++c) s -= aug(r2, c) * x[c];
        x[r2] = s / aug(r2, r2);
    }
    CHECK((solve_spd(a, b) - x).norm() <= 1e-10 * x.norm());
}

TEST_CASE("smallest eigenpair of the square Dirichlet laplacian") {
    const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 32);
    const FeMatrix k = assemble_stiffness(mesh, Support::Omega);
    const FeMatrix m = assemble_mass(mesh, Support::Omega);
    const EigenPair pair = smallest_eigenpair(k, m, mesh);
    const double exact = kPi * kPi / 2.0;
    CHECK(pair.lambda >= exact);          // conforming elements bound from above
    CHECK(pair.lambda <= exact * 1.01);   // within 1 percent at n = 32
    CHECK(!pair.simplicity_warning);

    // M-normalisation and the sign convention.
    const Eigen::VectorXd z = restrict_to_dofs(pair.z, k.dofs);
    CHECK(z.dot(m.mat * z) == doctest::Approx(1.0).epsilon(1e-12));
    double extreme = 0.0;
    for (double v : pair.z.values)
        if (std::abs(v) > std::abs(extreme)) extreme = v;
    CHECK(extreme > 0.0);
}

TEST_CASE("eigenvalues decrease under nested refinement") {
    double prev = std::numeric_limits<double>::infinity();
    for (int n : {8, 16, 32}) {
        const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, n);
        const FeMatrix k = assemble_stiffness(mesh, Support::Omega);
        const FeMatrix m = assemble_mass(mesh, Support::Omega);
        const double lambda = smallest_eigenpair(k, m, mesh).lambda;
        CHECK(lambda <= prev + 1e-13);
        prev = lambda;
    }
    CHECK(prev >= kPi * kPi / 2.0);
}

TEST_CASE("eigenvalue scales like one over length squared") {
    const Mesh coarse = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 8);
    const Mesh dilated =
        generate_box_with_rectangle({-4, -4, 4, 4}, {-2, -2, 2, 2}, 4);
    auto lam = [](const Mesh& mesh) {
        const FeMatrix k = assemble_stiffness(mesh, Support::Omega);
        const FeMatrix m = assemble_mass(mesh, Support::Omega);
        return smallest_eigenpair(k, m, mesh).lambda;
    };
    CHECK(lam(coarse) == doctest::Approx(4.0 * lam(dilated)).epsilon(1e-10));
}

TEST_CASE("disk eigenvalue approaches the known limit from above") {
    const double r = 2.0 / std::sqrt(kPi);
    const Mesh mesh = generate_box_with_disk(kBox, {0, 0}, r, r, 16);
    const FeMatrix k = assemble_stiffness(mesh, Support::Omega);
    const FeMatrix m = assemble_mass(mesh, Support::Omega);
    const double lambda = smallest_eigenpair(k, m, mesh).lambda;
    const double target = 4.542103371143974;
    CHECK(lambda >= target * 0.999);  // polygonal domain sits inside the disk
    CHECK(lambda <= target * 1.04);
}

TEST_CASE("quadrature rules integrate monomials exactly") {
    const Mesh ref = reference_triangle_mesh();
    for (const QuadratureRule* rule :
         {&QuadratureRule::order2(), &QuadratureRule::order4()}) {
        double wsum = 0.0;
        for (double w : rule->weights) wsum += w;
        CHECK(wsum == doctest::Approx(1.0).epsilon(1e-15));
        for (int a = 0; a + 0 <= rule->order; ++a)
            for (int b = 0; a + b <= rule->order; ++b) {
                const double got = integrate(
                    ref,
                    [&](const QuadPoint& q) {
                        return std::pow(q.x.x, a) * std::pow(q.x.y, b);
                    },
                    *rule, Support::Omega);
                CHECK(got == doctest::Approx(exact_ref_monomial(a, b)).epsilon(1e-13));
            }
    }
}

TEST_CASE("integrate: constants, quadratics and odd symmetry") {
    const Mesh mesh = generate_box_with_rectangle(kBox, {-1, -1, 1, 1}, 8);
    const auto& rule = QuadratureRule::order2();
    CHECK(integrate(mesh, [](const QuadPoint&) { return 1.0; }, rule, Support::Omega) ==
          doctest::Approx(4.0).epsilon(1e-14));
    CHECK(integrate(mesh, [](const QuadPoint& q) { return q.x.x * q.x.x; }, rule,
                    Support::Omega) == doctest::Approx(4.0 / 3.0).epsilon(1e-13));
    CHECK(std::abs(integrate(mesh, [](const QuadPoint& q) { return q.x.x * q.x.y; },
                             rule, Support::Omega)) < 1e-13);
}
