#include "shapeopt/fem.hpp"

#include <algorithm>
#include <cmath>

#include "shapeopt/errors.hpp"

namespace shapeopt {

DofMap scalar_dof_map(const Mesh& mesh, Support support) {
    DofMap map;
    map.support = support;
    map.vertex_to_dof.assign(mesh.n_vertices(), -1);
    if (support == Support::Omega) {
        const auto cls = classify_omega_vertices(mesh);
        for (int v = 0; v < mesh.n_vertices(); ++v)
            if (cls[v] == OmegaClass::Interior) {
                map.vertex_to_dof[v] = static_cast<int>(map.dof_to_vertex.size());
                map.dof_to_vertex.push_back(v);
            }
    } else {
        for (int v = 0; v < mesh.n_vertices(); ++v)
            if (!mesh.on_dirichlet_D[v]) {
                map.vertex_to_dof[v] = static_cast<int>(map.dof_to_vertex.size());
                map.dof_to_vertex.push_back(v);
            }
    }
    return map;
}

namespace {

bool triangle_in_support(const Mesh& mesh, int t, Support support) {
    return support == Support::HoldAll || mesh.in_omega[t];
}

template <typename ElementMatrix>
FeMatrix assemble(const Mesh& mesh, Support support, ElementMatrix element) {
    FeMatrix out;
    out.dofs = scalar_dof_map(mesh, support);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(9 * mesh.n_triangles());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (!triangle_in_support(mesh, t, support)) continue;
        const TriGeometry g = tri_geometry(mesh, t);
        if (g.area <= 0.0) throw SolverError("assembly over a degenerate triangle");
        double local[3][3];
        element(g, local);
        for (int i = 0; i < 3; ++i) {
            const int di = out.dofs.vertex_to_dof[mesh.triangles[t][i]];
            if (di < 0) continue;
            for (int j = 0; j < 3; ++j) {
                const int dj = out.dofs.vertex_to_dof[mesh.triangles[t][j]];
                if (dj >= 0) triplets.emplace_back(di, dj, local[i][j]);
            }
        }
    }
    out.mat.resize(out.dofs.count(), out.dofs.count());
    out.mat.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

}  // namespace

FeMatrix assemble_stiffness(const Mesh& mesh, Support support) {
    return assemble(mesh, support, [](const TriGeometry& g, double local[3][3]) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                local[i][j] = g.area * g.grad[i].dot(g.grad[j]);
    });
}

FeMatrix assemble_mass(const Mesh& mesh, Support support) {
    return assemble(mesh, support, [](const TriGeometry& g, double local[3][3]) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                local[i][j] = g.area / 12.0 * (i == j ? 2.0 : 1.0);
    });
}

SpdSolver::SpdSolver(const FeMatrix& a) : mat_(a.mat), dofs_(a.dofs) {
    ldlt_.compute(mat_);
    if (ldlt_.info() != Eigen::Success)
        throw SolverError("SPD factorisation breakdown (singular system?)");
}

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = ldlt_.solve(b);
    const double bnorm = b.norm();
    if (bnorm > 0.0 && (mat_ * x - b).norm() > 1e-10 * bnorm)
        throw SolverError("SPD solve residual above tolerance");
    return x;
}

Eigen::VectorXd solve_spd(const FeMatrix& a, const Eigen::VectorXd& b) {
    return SpdSolver(a).solve(b);
}

Eigen::VectorXd restrict_to_dofs(const ScalarField& f, const DofMap& dofs) {
    Eigen::VectorXd x(dofs.count());
    for (int d = 0; d < dofs.count(); ++d) x[d] = f.values[dofs.dof_to_vertex[d]];
    return x;
}

ScalarField expand_from_dofs(const Eigen::VectorXd& x, const DofMap& dofs,
                             int n_vertices) {
    ScalarField f(n_vertices, dofs.support);
    for (int d = 0; d < dofs.count(); ++d) f.values[dofs.dof_to_vertex[d]] = x[d];
    return f;
}

const QuadratureRule& QuadratureRule::order2() {
    static const QuadratureRule rule{
        2,
        {{{0.5, 0.5, 0.0}}, {{0.0, 0.5, 0.5}}, {{0.5, 0.0, 0.5}}},
        {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
    return rule;
}

const QuadratureRule& QuadratureRule::order4() {
    const double a1 = 0.816847572980459, b1 = 0.091576213509771;
    const double a2 = 0.108103018168070, b2 = 0.445948490915965;
    const double w1 = 0.109951743655322, w2 = 0.223381589678011;
    static const QuadratureRule rule{4,
                                     {{{a1, b1, b1}},
                                      {{b1, a1, b1}},
                                      {{b1, b1, a1}},
                                      {{a2, b2, b2}},
                                      {{b2, a2, b2}},
                                      {{b2, b2, a2}}},
                                     {w1, w1, w1, w2, w2, w2}};
    return rule;
}

Vec2 point_at(const Mesh& mesh, int tri, const std::array<double, 3>& bary) {
    const auto& t = mesh.triangles[tri];
    return mesh.vertices[t[0]] * bary[0] + mesh.vertices[t[1]] * bary[1] +
           mesh.vertices[t[2]] * bary[2];
}

double eval_scalar(const Mesh& mesh, const ScalarField& f, int tri,
                   const std::array<double, 3>& bary) {
    const auto& t = mesh.triangles[tri];
    return f.values[t[0]] * bary[0] + f.values[t[1]] * bary[1] +
           f.values[t[2]] * bary[2];
}

Vec2 scalar_gradient(const Mesh& mesh, const ScalarField& f, int tri) {
    const TriGeometry g = tri_geometry(mesh, tri);
    Vec2 grad{0.0, 0.0};
    for (int k = 0; k < 3; ++k) grad += f.values[mesh.triangles[tri][k]] * g.grad[k];
    return grad;
}

Vec2 eval_vector(const Mesh& mesh, const VectorField& v, int tri,
                 const std::array<double, 3>& bary) {
    const auto& t = mesh.triangles[tri];
    return v.at(t[0]) * bary[0] + v.at(t[1]) * bary[1] + v.at(t[2]) * bary[2];
}

double integrate(const Mesh& mesh, const std::function<double(const QuadPoint&)>& f,
                 const QuadratureRule& rule, Support support) {
    double sum = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (!triangle_in_support(mesh, t, support)) continue;
        const double area = tri_geometry(mesh, t).area;
        double local = 0.0;
        for (std::size_t q = 0; q < rule.points.size(); ++q)
            local += rule.weights[q] *
                     f(QuadPoint{point_at(mesh, t, rule.points[q]), t, rule.points[q]});
        sum += area * local;
    }
    return sum;
}

Eigen::VectorXd assemble_load(const Mesh& mesh,
                              const std::function<double(const QuadPoint&)>& f,
                              const QuadratureRule& rule, const DofMap& dofs) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dofs.count());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (!triangle_in_support(mesh, t, dofs.support)) continue;
        const double area = tri_geometry(mesh, t).area;
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double fx =
                f(QuadPoint{point_at(mesh, t, rule.points[q]), t, rule.points[q]});
            for (int k = 0; k < 3; ++k) {
                const int d = dofs.vertex_to_dof[mesh.triangles[t][k]];
                if (d >= 0) b[d] += area * rule.weights[q] * fx * rule.points[q][k];
            }
        }
    }
    return b;
}

EigenPair smallest_eigenpair(const FeMatrix& k, const FeMatrix& m, const Mesh& mesh,
                             const EigenOptions& opts) {
    if (k.dofs.count() != m.dofs.count() || k.dofs.count() == 0)
        throw ContractViolation("smallest_eigenpair: incompatible or empty operators");
    const int n = k.dofs.count();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> kinv(k.mat);
    if (kinv.info() != Eigen::Success)
        throw SolverError("stiffness factorisation failed in eigenvalue solve");
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> minv(m.mat);
    if (minv.info() != Eigen::Success)
        throw SolverError("mass factorisation failed in eigenvalue solve");

    const auto m_normalise = [&](Eigen::VectorXd& x) {
        const double s = std::sqrt(x.dot(m.mat * x));
        if (!(s > 0.0)) throw SolverError("eigenvalue iterate collapsed to zero");
        x /= s;
    };

    Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
    m_normalise(x);
    double lambda = x.dot(k.mat * x);
    double lambda_prev;
    int it = 0;
    bool converged = false;
    for (; it < opts.max_iter; ++it) {
        Eigen::VectorXd w = kinv.solve(m.mat * x);
        m_normalise(w);
        lambda_prev = lambda;
        lambda = w.dot(k.mat * w);
        x = w;
        if (std::abs(lambda - lambda_prev) <= opts.increment_tol * std::max(1.0, lambda)) {
            const Eigen::VectorXd r = k.mat * x - lambda * (m.mat * x);
            if (std::sqrt(r.dot(minv.solve(r))) <= 1e-10 * std::max(1.0, lambda)) {
                converged = true;
                ++it;
                break;
            }
        }
    }
    if (!converged)
        throw SolverError("inverse power iteration did not converge");

    // Deflated iteration for a second-eigenvalue estimate (simplicity check).
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = (i % 2 == 0) ? 1.0 : -1.0;
    double lambda2 = lambda;
    for (int j = 0; j < 60; ++j) {
        y -= x * (x.dot(m.mat * y));
        const double s = std::sqrt(y.dot(m.mat * y));
        if (!(s > 1e-300)) break;
        y /= s;
        lambda2 = y.dot(k.mat * y);
        y = kinv.solve(m.mat * y);
    }

    EigenPair out;
    out.lambda = lambda;
    out.iterations = it;
    out.gap_ratio = (lambda2 - lambda) / lambda;
    out.simplicity_warning = out.gap_ratio < 1e-6;

    int imax = 0;
    for (int i = 1; i < n; ++i)
        if (std::abs(x[i]) > std::abs(x[imax])) imax = i;
    if (x[imax] < 0.0) x = -x;
    out.z = expand_from_dofs(x, k.dofs, mesh.n_vertices());
    return out;
}

}  // namespace shapeopt
