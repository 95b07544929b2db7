#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "shapeopt/fields.hpp"
#include "shapeopt/geometry.hpp"

namespace shapeopt {

/// Conforming triangulation of the hold-all box with an embedded polygonal
/// subdomain Omega marked triangle-wise. Immutable after construction; all
/// deforming operations return new meshes.
struct Mesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;  // counter-clockwise
    std::vector<std::uint8_t> in_omega;         // per triangle
    std::vector<std::uint8_t> on_dirichlet_D;   // per vertex, 1 on the hold-all boundary

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_triangles() const { return static_cast<int>(triangles.size()); }
};

/// Per-triangle geometry of a P1 element: signed area and basis gradients.
struct TriGeometry {
    double area = 0.0;
    std::array<Vec2, 3> grad;  // gradients of the three hat functions
};

TriGeometry tri_geometry(const Mesh& mesh, int t);

/// Value of the P1 vector field Jacobian DV on triangle t (constant there).
Mat2 field_jacobian(const Mesh& mesh, const VectorField& v, int t);

/// Vertex classification relative to Omega.
enum class OmegaClass : std::uint8_t { Outside = 0, Boundary = 1, Interior = 2 };

/// Classifies every vertex: Interior iff all incident triangles lie in Omega,
/// Boundary iff incident to both kinds.
std::vector<OmegaClass> classify_omega_vertices(const Mesh& mesh);

/// Vertex indices on the Omega boundary (the derived Dirichlet set for Omega).
std::vector<int> omega_boundary_vertices(const Mesh& mesh);

/// Closed loops of vertex indices tracing the polygonal Omega boundary,
/// oriented with Omega on the left.
std::vector<std::vector<int>> omega_boundary_loops(const Mesh& mesh);

struct DeformationReport {
    double min_jacobian_det = 1.0;  // min over triangles of det(I + t DV)
    double max_spectral_DV = 0.0;   // max over triangles of |DV|
    bool valid = true;              // min_jacobian_det > 0
};

/// Structured criss-cross triangulation of `box` (4 triangles per grid cell)
/// with `inner` marked as Omega. `n` counts cells per unit length; the inner
/// rectangle must lie on grid lines and strictly inside the box.
Mesh generate_box_with_rectangle(const Rect& box, const Rect& inner, int n);

/// Ellipse (or disk, for equal semiaxes) obtained by a blended bi-Lipschitz
/// square-to-disk map applied to a rectangle mesh. Semiaxes strictly inside box.
Mesh generate_box_with_disk(const Rect& box, const Vec2& center,
                            double semiaxis_x, double semiaxis_y, int n);

/// Moves every vertex to x + t V(x). Connectivity and flags are unchanged;
/// the report carries validity data, the caller decides what to do with it.
std::pair<Mesh, DeformationReport> deform(const Mesh& mesh, const VectorField& v,
                                          double t);

/// Sum of signed areas of the Omega triangles.
double omega_area(const Mesh& mesh);

/// Area-weighted centroid of Omega.
Vec2 omega_barycenter(const Mesh& mesh);

/// Checks mesh invariants (positive areas, conformity, Omega contained in the
/// interior of the hold-all). Throws GeneratorError on violation.
void validate_mesh(const Mesh& mesh);

/// Mean-ratio style triangle quality in (0, 1], 1 for equilateral.
double min_triangle_quality(const Mesh& mesh);

}  // namespace shapeopt
