#include "shapeopt/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <set>

#include "shapeopt/errors.hpp"

namespace shapeopt {

TriGeometry tri_geometry(const Mesh& mesh, int t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 a = mesh.vertices[tri[0]];
    const Vec2 b = mesh.vertices[tri[1]];
    const Vec2 c = mesh.vertices[tri[2]];
    TriGeometry g;
    const double twice_area = cross(b - a, c - a);
    g.area = 0.5 * twice_area;
    g.grad[0] = Vec2{b.y - c.y, c.x - b.x} * (1.0 / twice_area);
    g.grad[1] = Vec2{c.y - a.y, a.x - c.x} * (1.0 / twice_area);
    g.grad[2] = Vec2{a.y - b.y, b.x - a.x} * (1.0 / twice_area);
    return g;
}

Mat2 field_jacobian(const Mesh& mesh, const VectorField& v, int t) {
    const TriGeometry g = tri_geometry(mesh, t);
    Mat2 dv;
    for (int k = 0; k < 3; ++k) {
        const Vec2 val = v.at(mesh.triangles[t][k]);
        dv += Mat2::outer(val, g.grad[k]);
    }
    return dv;
}

std::vector<OmegaClass> classify_omega_vertices(const Mesh& mesh) {
    const int nv = mesh.n_vertices();
    std::vector<std::uint8_t> touches_in(nv, 0), touches_out(nv, 0);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        for (int k = 0; k < 3; ++k) {
            const int v = mesh.triangles[t][k];
            (mesh.in_omega[t] ? touches_in[v] : touches_out[v]) = 1;
        }
    }
    std::vector<OmegaClass> cls(nv, OmegaClass::Outside);
    for (int v = 0; v < nv; ++v) {
        if (touches_in[v])
            cls[v] = touches_out[v] ? OmegaClass::Boundary : OmegaClass::Interior;
    }
    return cls;
}

std::vector<int> omega_boundary_vertices(const Mesh& mesh) {
    const auto cls = classify_omega_vertices(mesh);
    std::vector<int> out;
    for (int v = 0; v < mesh.n_vertices(); ++v)
        if (cls[v] == OmegaClass::Boundary) out.push_back(v);
    return out;
}

std::vector<std::vector<int>> omega_boundary_loops(const Mesh& mesh) {
    // Directed boundary edges: edges of in-Omega triangles whose reverse is not
    // an edge of another in-Omega triangle. Orientation keeps Omega on the left.
    std::set<std::pair<int, int>> omega_edges;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (!mesh.in_omega[t]) continue;
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k)
            omega_edges.insert({tri[k], tri[(k + 1) % 3]});
    }
    std::map<int, int> next;  // boundary edge successor map, start -> end
    for (const auto& e : omega_edges) {
        if (!omega_edges.count({e.second, e.first})) next[e.first] = e.second;
    }
    std::vector<std::vector<int>> loops;
    std::set<int> used;
    for (const auto& [start, _] : next) {
        if (used.count(start)) continue;
        std::vector<int> loop;
        int v = start;
        do {
            loop.push_back(v);
            used.insert(v);
            auto it = next.find(v);
            if (it == next.end())
                throw GeneratorError("omega boundary is not a closed curve");
            v = it->second;
        } while (v != start);
        loops.push_back(std::move(loop));
    }
    return loops;
}

namespace {

struct Grid {
    Rect box;
    int nx = 0, ny = 0;  // cells
    double hx = 0.0, hy = 0.0;

    int grid_vertex(int i, int j) const { return j * (nx + 1) + i; }
    int center_vertex(int i, int j) const { return (nx + 1) * (ny + 1) + j * nx + i; }
};

Grid make_grid(const Rect& box, int n) {
    if (n < 1) throw ConfigError("subdivision count must be positive");
    Grid g;
    g.box = box;
    const double fx = box.width() * n;
    const double fy = box.height() * n;
    g.nx = static_cast<int>(std::lround(fx));
    g.ny = static_cast<int>(std::lround(fy));
    if (std::abs(fx - g.nx) > 1e-9 || std::abs(fy - g.ny) > 1e-9)
        throw ConfigError("box dimensions are not an integer number of cells");
    if (g.nx < 3 || g.ny < 3)
        throw ConfigError("grid too coarse to contain a subdomain");
    g.hx = box.width() / g.nx;
    g.hy = box.height() / g.ny;
    return g;
}

int snap_to_grid(double coord, double origin, double h, const char* what) {
    const double f = (coord - origin) / h;
    const int idx = static_cast<int>(std::lround(f));
    if (std::abs(f - idx) > 1e-9 * std::max(1.0, std::abs(f)))
        throw ConfigError(std::string(what) + " does not lie on a mesh line");
    return idx;
}

Mesh criss_cross(const Grid& g, int i0, int i1, int j0, int j1) {
    Mesh mesh;
    const int n_grid = (g.nx + 1) * (g.ny + 1);
    mesh.vertices.resize(n_grid + g.nx * g.ny);
    mesh.on_dirichlet_D.assign(mesh.vertices.size(), 0);
    for (int j = 0; j <= g.ny; ++j)
        for (int i = 0; i <= g.nx; ++i) {
            mesh.vertices[g.grid_vertex(i, j)] = {g.box.x0 + i * g.hx, g.box.y0 + j * g.hy};
            if (i == 0 || j == 0 || i == g.nx || j == g.ny)
                mesh.on_dirichlet_D[g.grid_vertex(i, j)] = 1;
        }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            mesh.vertices[g.center_vertex(i, j)] = {g.box.x0 + (i + 0.5) * g.hx,
                                                    g.box.y0 + (j + 0.5) * g.hy};
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int v00 = g.grid_vertex(i, j);
            const int v10 = g.grid_vertex(i + 1, j);
            const int v01 = g.grid_vertex(i, j + 1);
            const int v11 = g.grid_vertex(i + 1, j + 1);
            const int c = g.center_vertex(i, j);
            const bool inside = (i >= i0 && i < i1 && j >= j0 && j < j1);
            for (const auto& tri : {std::array<int, 3>{v00, v10, c},
                                    std::array<int, 3>{v10, v11, c},
                                    std::array<int, 3>{v11, v01, c},
                                    std::array<int, 3>{v01, v00, c}}) {
                mesh.triangles.push_back(tri);
                mesh.in_omega.push_back(inside ? 1 : 0);
            }
        }
    return mesh;
}

}  // namespace

Mesh generate_box_with_rectangle(const Rect& box, const Rect& inner, int n) {
    if (!(inner.x0 > box.x0 && inner.x1 < box.x1 && inner.y0 > box.y0 &&
          inner.y1 < box.y1 && inner.x0 < inner.x1 && inner.y0 < inner.y1))
        throw ConfigError("inner rectangle must lie strictly inside the box");
    const Grid g = make_grid(box, n);
    const int i0 = snap_to_grid(inner.x0, box.x0, g.hx, "inner rectangle x0");
    const int i1 = snap_to_grid(inner.x1, box.x0, g.hx, "inner rectangle x1");
    const int j0 = snap_to_grid(inner.y0, box.y0, g.hy, "inner rectangle y0");
    const int j1 = snap_to_grid(inner.y1, box.y0, g.hy, "inner rectangle y1");
    Mesh mesh = criss_cross(g, i0, i1, j0, j1);
    validate_mesh(mesh);
    return mesh;
}

Mesh generate_box_with_disk(const Rect& box, const Vec2& center, double semiaxis_x,
                            double semiaxis_y, int n) {
    if (semiaxis_x <= 0.0 || semiaxis_y <= 0.0)
        throw ConfigError("ellipse semiaxes must be positive");
    const double margin = std::min({center.x - box.x0, box.x1 - center.x,
                                    center.y - box.y0, box.y1 - center.y});
    const double max_semiaxis = std::max(semiaxis_x, semiaxis_y);
    if (max_semiaxis >= margin)
        throw ConfigError("ellipse must lie strictly inside the box");

    const Grid g = make_grid(box, n);
    // Inner square (half-width a) that the square-to-disk map sends onto the
    // ellipse; snapped to grid lines.
    int k = static_cast<int>(std::lround(0.75 * max_semiaxis * n));
    k = std::max(k, 2);
    const double a = static_cast<double>(k) / n;
    if (a >= margin) throw ConfigError("ellipse too large for the box at this resolution");
    const double blend_end = a + 0.5 * (margin - a);

    const int ic = snap_to_grid(center.x, box.x0, g.hx, "ellipse center x");
    const int jc = snap_to_grid(center.y, box.y0, g.hy, "ellipse center y");
    Mesh mesh = criss_cross(g, ic - k, ic + k, jc - k, jc + k);

    for (auto& p : mesh.vertices) {
        const Vec2 u = p - center;
        const double s = std::max(std::abs(u.x), std::abs(u.y));
        if (s == 0.0 || s >= blend_end) continue;
        // Square ring of half-width s maps onto the circle of radius s, then
        // the axes are scaled to the requested semiaxes.
        const Vec2 on_circle = u * (s / u.norm());
        const Vec2 mapped{on_circle.x * (semiaxis_x / a), on_circle.y * (semiaxis_y / a)};
        const double w = (s <= a) ? 1.0 : (blend_end - s) / (blend_end - a);
        p = p + w * (mapped - u);
    }
    for (int t = 0; t < mesh.n_triangles(); ++t)
        if (tri_geometry(mesh, t).area <= 0.0)
            throw GeneratorError(
                "square-to-disk blend inverted a triangle; increase the resolution n");
    validate_mesh(mesh);
    return mesh;
}

std::pair<Mesh, DeformationReport> deform(const Mesh& mesh, const VectorField& v,
                                          double t) {
    Mesh out = mesh;
    if (t != 0.0) {
        for (int i = 0; i < mesh.n_vertices(); ++i)
            out.vertices[i] = mesh.vertices[i] + t * v.at(i);
    }
    DeformationReport report;
    for (int k = 0; k < mesh.n_triangles(); ++k) {
        const double area_before = tri_geometry(mesh, k).area;
        const double area_after = tri_geometry(out, k).area;
        report.min_jacobian_det = std::min(report.min_jacobian_det, area_after / area_before);
        report.max_spectral_DV =
            std::max(report.max_spectral_DV, spectral_norm(field_jacobian(mesh, v, k)));
    }
    report.valid = report.min_jacobian_det > 0.0;
    return {std::move(out), report};
}

double omega_area(const Mesh& mesh) {
    double area = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t)
        if (mesh.in_omega[t]) area += tri_geometry(mesh, t).area;
    return area;
}

Vec2 omega_barycenter(const Mesh& mesh) {
    Vec2 weighted{0.0, 0.0};
    double area = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (!mesh.in_omega[t]) continue;
        const double a = tri_geometry(mesh, t).area;
        const auto& tri = mesh.triangles[t];
        const Vec2 centroid =
            (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) *
            (1.0 / 3.0);
        weighted += a * centroid;
        area += a;
    }
    if (area <= 0.0) throw ContractViolation("omega_barycenter: empty Omega");
    return weighted * (1.0 / area);
}

void validate_mesh(const Mesh& mesh) {
    if (mesh.in_omega.size() != mesh.triangles.size() ||
        mesh.on_dirichlet_D.size() != mesh.vertices.size())
        throw GeneratorError("mesh flag arrays inconsistent with mesh size");
    for (int t = 0; t < mesh.n_triangles(); ++t)
        if (tri_geometry(mesh, t).area <= 0.0)
            throw GeneratorError("triangle with non-positive area");

    // Conformity: every directed edge occurs at most once, every undirected
    // edge is shared by at most two triangles.
    std::map<std::pair<int, int>, int> directed;
    for (const auto& tri : mesh.triangles)
        for (int k = 0; k < 3; ++k)
            if (++directed[{tri[k], tri[(k + 1) % 3]}] > 1)
                throw GeneratorError("non-conforming mesh: duplicated directed edge");

    // Omega vertices stay away from the hold-all boundary.
    const auto cls = classify_omega_vertices(mesh);
    for (int v = 0; v < mesh.n_vertices(); ++v)
        if (cls[v] != OmegaClass::Outside && mesh.on_dirichlet_D[v])
            throw GeneratorError("Omega touches the hold-all boundary");

    // Omega is edge-connected.
    std::map<std::pair<int, int>, int> edge_owner;
    std::vector<std::vector<int>> neighbors(mesh.n_triangles());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (!mesh.in_omega[t]) continue;
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k) {
            const int a = std::min(tri[k], tri[(k + 1) % 3]);
            const int b = std::max(tri[k], tri[(k + 1) % 3]);
            auto [it, inserted] = edge_owner.try_emplace({a, b}, t);
            if (!inserted) {
                neighbors[t].push_back(it->second);
                neighbors[it->second].push_back(t);
            }
        }
    }
    int first = -1, count = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t)
        if (mesh.in_omega[t]) {
            if (first < 0) first = t;
            ++count;
        }
    if (count == 0) return;
    std::queue<int> work;
    std::vector<std::uint8_t> seen(mesh.n_triangles(), 0);
    work.push(first);
    seen[first] = 1;
    int reached = 0;
    while (!work.empty()) {
        const int t = work.front();
        work.pop();
        ++reached;
        for (int nb : neighbors[t])
            if (!seen[nb]) {
                seen[nb] = 1;
                work.push(nb);
            }
    }
    if (reached != count) throw GeneratorError("Omega is not edge-connected");
}

double min_triangle_quality(const Mesh& mesh) {
    double q = 1.0;
    for (const auto& tri : mesh.triangles) {
        const Vec2 a = mesh.vertices[tri[0]];
        const Vec2 b = mesh.vertices[tri[1]];
        const Vec2 c = mesh.vertices[tri[2]];
        const double area = 0.5 * cross(b - a, c - a);
        const double edges2 = (b - a).dot(b - a) + (c - b).dot(c - b) + (a - c).dot(a - c);
        q = std::min(q, 4.0 * std::sqrt(3.0) * area / edges2);
    }
    return q;
}

}  // namespace shapeopt
