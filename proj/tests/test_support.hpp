#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "shapeopt/audit.hpp"
#include "shapeopt/descent.hpp"
#include "shapeopt/fem.hpp"
#include "shapeopt/mesh.hpp"
#include "shapeopt/problems.hpp"

namespace test_support {

using namespace shapeopt;

/// 8-triangle mesh: an inner triangle (Omega) inside a square hold-all, the
/// annulus between them triangulated by hand. Three free vertices.
inline Mesh tiny_omega_mesh() {
    Mesh m;
    m.vertices = {{0, 0}, {4, 0}, {4, 4}, {0, 4},
                  {1.6, 1.2}, {2.6, 1.4}, {2.0, 2.6}};
    m.triangles = {{0, 1, 4}, {1, 5, 4}, {1, 2, 5}, {2, 6, 5},
                   {2, 3, 6}, {3, 4, 6}, {3, 0, 4}, {4, 5, 6}};
    m.in_omega = {0, 0, 0, 0, 0, 0, 0, 1};
    m.on_dirichlet_D = {1, 1, 1, 1, 0, 0, 0};
    validate_mesh(m);
    return m;
}

/// 3x3 vertex grid with a single free vertex at the centre (two dofs).
inline Mesh one_free_vertex_mesh() {
    Mesh m;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) m.vertices.push_back({double(i), double(j)});
    auto v = [](int i, int j) { return j * 3 + i; };
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) {
            m.triangles.push_back({v(i, j), v(i + 1, j), v(i + 1, j + 1)});
            m.triangles.push_back({v(i, j), v(i + 1, j + 1), v(i, j + 1)});
        }
    m.in_omega.assign(m.triangles.size(), 0);
    m.on_dirichlet_D.assign(9, 1);
    m.on_dirichlet_D[v(1, 1)] = 0;
    return m;
}

inline double shoelace_area(const Mesh& mesh) {
    double area = 0.0;
    for (const auto& loop : omega_boundary_loops(mesh)) {
        for (std::size_t i = 0; i < loop.size(); ++i) {
            const Vec2 a = mesh.vertices[loop[i]];
            const Vec2 b = mesh.vertices[loop[(i + 1) % loop.size()]];
            area += 0.5 * (a.x * b.y - b.x * a.y);
        }
    }
    return area;
}

/// Outward flux of a P1 field through the Omega boundary (edge trapezoid rule,
/// exact for P1).
inline double boundary_flux(const Mesh& mesh, const VectorField& v) {
    double flux = 0.0;
    for (const auto& loop : omega_boundary_loops(mesh)) {
        for (std::size_t i = 0; i < loop.size(); ++i) {
            const int a = loop[i];
            const int b = loop[(i + 1) % loop.size()];
            const Vec2 edge = mesh.vertices[b] - mesh.vertices[a];
            const Vec2 outward_scaled{edge.y, -edge.x};  // Omega on the left
            flux += 0.5 * (v.at(a) + v.at(b)).dot(outward_scaled);
        }
    }
    return flux;
}

/// Hessian test double: an SPD quadratic acting on the displacement of one
/// designated vertex.
struct PointQuadraticOperator final : BilinearOperator {
    Mat2 q;
    int vertex = 0;
    int n_vertices = 0;

    DualVector apply(const VectorField& v) const override {
        DualVector out(n_vertices);
        const Vec2 qa = q * v.at(vertex);
        out.values[2 * vertex] = qa.x;
        out.values[2 * vertex + 1] = qa.y;
        return out;
    }
};

inline Integrand constant_integrand(double value) {
    Integrand j;
    j.j = [value](const Vec2&, double) { return value; };
    j.j_x = [](const Vec2&, double) { return Vec2{0, 0}; };
    j.j_y = [](const Vec2&, double) { return 0.0; };
    j.j_yy = [](const Vec2&, double) { return 0.0; };
    j.j_yx = [](const Vec2&, double) { return Vec2{0, 0}; };
    j.j_xx = [](const Vec2&, double) { return Mat2{}; };
    return j;
}

inline Integrand linear_integrand() {
    Integrand j = constant_integrand(0.0);
    j.j = [](const Vec2&, double y) { return y; };
    j.j_y = [](const Vec2&, double) { return 1.0; };
    return j;
}

inline SourceData constant_source(double value) {
    SourceData f;
    f.F = [value](const Vec2&) { return value; };
    f.grad_F = [](const Vec2&) { return Vec2{0, 0}; };
    f.hess_F = [](const Vec2&) { return Mat2{}; };
    return f;
}

}  // namespace test_support
