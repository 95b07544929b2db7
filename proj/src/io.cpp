#include "shapeopt/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "shapeopt/errors.hpp"

namespace shapeopt {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    return os;
}

}  // namespace

void write_mesh_text(std::ostream& os, const Mesh& mesh) {
    os << "shapeopt-mesh v1\n";
    os << mesh.n_vertices() << ' ' << mesh.n_triangles() << '\n';
    for (const Vec2& v : mesh.vertices)
        os << fmt_double(v.x) << ' ' << fmt_double(v.y) << '\n';
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        os << tri[0] << ' ' << tri[1] << ' ' << tri[2] << ' '
           << int(mesh.in_omega[t]) << '\n';
    }
}

Mesh read_mesh_text(std::istream& is) {
    std::string word, version;
    is >> word >> version;
    if (!is || word != "shapeopt-mesh" || version != "v1")
        throw ConfigError("not a shapeopt-mesh v1 file");
    int nv = 0, nt = 0;
    is >> nv >> nt;
    if (!is || nv < 3 || nt < 1) throw ConfigError("invalid mesh header counts");
    Mesh mesh;
    mesh.vertices.resize(nv);
    for (int i = 0; i < nv; ++i) is >> mesh.vertices[i].x >> mesh.vertices[i].y;
    mesh.triangles.resize(nt);
    mesh.in_omega.resize(nt);
    for (int t = 0; t < nt; ++t) {
        int flag = 0;
        is >> mesh.triangles[t][0] >> mesh.triangles[t][1] >> mesh.triangles[t][2] >>
            flag;
        mesh.in_omega[t] = flag ? 1 : 0;
        for (int k = 0; k < 3; ++k)
            if (mesh.triangles[t][k] < 0 || mesh.triangles[t][k] >= nv)
                throw ConfigError("triangle vertex index out of range");
    }
    if (!is) throw ConfigError("truncated mesh file");

    // Hold-all boundary vertices: endpoints of edges with a single incident
    // triangle.
    {
        std::vector<std::vector<std::pair<int, int>>> per_vertex(nv);
        mesh.on_dirichlet_D.assign(nv, 0);
        auto bump = [&](int a, int b) {
            const int lo = std::min(a, b), hi = std::max(a, b);
            for (auto& [other, count] : per_vertex[lo])
                if (other == hi) {
                    ++count;
                    return;
                }
            per_vertex[lo].push_back({hi, 1});
        };
        for (const auto& tri : mesh.triangles)
            for (int k = 0; k < 3; ++k) bump(tri[k], tri[(k + 1) % 3]);
        for (int lo = 0; lo < nv; ++lo)
            for (const auto& [hi, count] : per_vertex[lo])
                if (count == 1) {
                    mesh.on_dirichlet_D[lo] = 1;
                    mesh.on_dirichlet_D[hi] = 1;
                }
    }
    validate_mesh(mesh);
    return mesh;
}

void write_mesh_text_file(const std::string& path, const Mesh& mesh) {
    auto os = open_out(path);
    write_mesh_text(os, mesh);
}

Mesh read_mesh_text_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open mesh file: " + path);
    return read_mesh_text(is);
}

void write_vtk(const std::string& path, const Mesh& mesh,
               const std::vector<std::pair<std::string, const std::vector<double>*>>&
                   point_scalars) {
    auto os = open_out(path);
    os << "# vtk DataFile Version 3.0\n";
    os << "shapeopt triangulation\n";
    os << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.n_vertices() << " double\n";
    for (const Vec2& v : mesh.vertices)
        os << fmt_double(v.x) << ' ' << fmt_double(v.y) << " 0\n";
    os << "CELLS " << mesh.n_triangles() << ' ' << 4 * mesh.n_triangles() << '\n';
    for (const auto& tri : mesh.triangles)
        os << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
    os << "CELL_TYPES " << mesh.n_triangles() << '\n';
    for (int t = 0; t < mesh.n_triangles(); ++t) os << "5\n";
    os << "CELL_DATA " << mesh.n_triangles() << '\n';
    os << "SCALARS in_omega int 1\nLOOKUP_TABLE default\n";
    for (int t = 0; t < mesh.n_triangles(); ++t) os << int(mesh.in_omega[t]) << '\n';
    if (!point_scalars.empty()) {
        os << "POINT_DATA " << mesh.n_vertices() << '\n';
        for (const auto& [name, values] : point_scalars) {
            os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (int v = 0; v < mesh.n_vertices(); ++v)
                os << fmt_double((*values)[v]) << '\n';
        }
    }
}

void write_energy_csv(const std::string& path, const History& history) {
    auto os = open_out(path);
    os << "# iteration,energy,step,area,admm_iters\n";
    for (const auto& r : history.records)
        os << r.iter << ',' << fmt_double(r.energy) << ',' << fmt_double(r.step) << ','
           << fmt_double(r.omega_area) << ',' << r.admm_iterations << '\n';
}

void write_energy_svg(const std::string& path, const History& history,
                      std::optional<double> offset) {
    const auto& recs = history.records;
    if (recs.empty()) throw ContractViolation("empty history");
    double base;
    if (offset) {
        base = *offset;
    } else {
        base = recs[0].energy;
        for (const auto& r : recs) base = std::min(base, r.energy);
    }
    double lo = recs[0].energy - base, hi = lo;
    for (const auto& r : recs) {
        lo = std::min(lo, r.energy - base);
        hi = std::max(hi, r.energy - base);
    }
    if (hi - lo < 1e-300) hi = lo + 1.0;

    const double w = 640.0, h = 480.0, ml = 70.0, mr = 20.0, mt = 30.0, mb = 40.0;
    const double px = (w - ml - mr) / std::max<std::size_t>(1, recs.size() - 1);
    auto sx = [&](std::size_t i) { return ml + px * static_cast<double>(i); };
    auto sy = [&](double v) { return h - mb - (v - lo) / (hi - lo) * (h - mt - mb); };

    auto os = open_out(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
       << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
       << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
       << h - mb << "\" stroke=\"black\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"#c22\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < recs.size(); ++i)
        os << sx(i) << ',' << sy(recs[i].energy - base) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << ml << "\" y=\"" << mt - 10
       << "\" font-size=\"13\">energy offset by " << fmt_double(base) << "</text>\n";
    os << "<text x=\"" << ml - 60 << "\" y=\"" << sy(hi) + 4 << "\" font-size=\"11\">"
       << fmt_double(hi) << "</text>\n";
    os << "<text x=\"" << ml - 60 << "\" y=\"" << sy(lo) + 4 << "\" font-size=\"11\">"
       << fmt_double(lo) << "</text>\n";
    os << "<text x=\"" << w - mr - 30 << "\" y=\"" << h - mb + 25
       << "\" font-size=\"11\">" << recs.size() - 1 << "</text>\n";
    os << "</svg>\n";
}

}  // namespace shapeopt
