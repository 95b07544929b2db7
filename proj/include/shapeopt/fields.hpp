#pragma once

#include <cstddef>
#include <vector>

#include "shapeopt/geometry.hpp"

namespace shapeopt {

enum class Support { Omega, HoldAll };

/// P1 nodal scalar function over the hold-all vertex set. With support Omega the
/// values vanish on the Omega boundary and outside Omega.
struct ScalarField {
    std::vector<double> values;
    Support support = Support::Omega;

    ScalarField() = default;
    ScalarField(std::size_t n_vertices, Support s)
        : values(n_vertices, 0.0), support(s) {}
    std::size_t size() const { return values.size(); }
};

/// P1 nodal vector field over the hold-all, zero on the hold-all boundary.
/// Components interleaved: (x_0, y_0, x_1, y_1, ...).
struct VectorField {
    std::vector<double> xy;

    VectorField() = default;
    explicit VectorField(std::size_t n_vertices) : xy(2 * n_vertices, 0.0) {}
    std::size_t n_vertices() const { return xy.size() / 2; }
    Vec2 at(int v) const { return {xy[2 * v], xy[2 * v + 1]}; }
    void set(int v, const Vec2& val) {
        xy[2 * v] = val.x;
        xy[2 * v + 1] = val.y;
    }
};

}  // namespace shapeopt
