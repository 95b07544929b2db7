#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "shapeopt/fields.hpp"
#include "shapeopt/mesh.hpp"

namespace shapeopt {

/// Map between hold-all vertices and active (non-Dirichlet) degrees of freedom.
struct DofMap {
    std::vector<int> vertex_to_dof;  // -1 where constrained
    std::vector<int> dof_to_vertex;
    Support support = Support::Omega;

    int count() const { return static_cast<int>(dof_to_vertex.size()); }
};

DofMap scalar_dof_map(const Mesh& mesh, Support support);

/// Symmetric sparse matrix over the active scalar degrees of freedom.
struct FeMatrix {
    Eigen::SparseMatrix<double> mat;
    DofMap dofs;
};

/// Stiffness matrix (grad-grad) over the support triangles, Dirichlet dofs
/// eliminated.
FeMatrix assemble_stiffness(const Mesh& mesh, Support support);

/// Mass matrix; element matrix (area/12) [[2,1,1],[1,2,1],[1,1,2]].
FeMatrix assemble_mass(const Mesh& mesh, Support support);

/// One-shot SPD solve with residual check (|Ax-b| <= 1e-10 |b|).
Eigen::VectorXd solve_spd(const FeMatrix& a, const Eigen::VectorXd& b);

/// Cached Cholesky-type factorisation for repeated SPD solves.
class SpdSolver {
  public:
    explicit SpdSolver(const FeMatrix& a);
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    const DofMap& dofs() const { return dofs_; }
    const Eigen::SparseMatrix<double>& matrix() const { return mat_; }

  private:
    Eigen::SparseMatrix<double> mat_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
    DofMap dofs_;
};

Eigen::VectorXd restrict_to_dofs(const ScalarField& f, const DofMap& dofs);
ScalarField expand_from_dofs(const Eigen::VectorXd& x, const DofMap& dofs,
                             int n_vertices);

/// Quadrature on the reference triangle in barycentric coordinates; weights
/// sum to one (multiply by the physical triangle area when integrating).
struct QuadratureRule {
    int order = 0;
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;

    static const QuadratureRule& order2();  // 3 edge midpoints
    static const QuadratureRule& order4();  // 6-point rule
};

Vec2 point_at(const Mesh& mesh, int tri, const std::array<double, 3>& bary);
double eval_scalar(const Mesh& mesh, const ScalarField& f, int tri,
                   const std::array<double, 3>& bary);
Vec2 scalar_gradient(const Mesh& mesh, const ScalarField& f, int tri);
Vec2 eval_vector(const Mesh& mesh, const VectorField& v, int tri,
                 const std::array<double, 3>& bary);

/// One quadrature point during assembly or integration.
struct QuadPoint {
    Vec2 x;
    int tri = 0;
    std::array<double, 3> bary{};
};

inline double eval_scalar(const Mesh& mesh, const ScalarField& f, const QuadPoint& q) {
    return eval_scalar(mesh, f, q.tri, q.bary);
}
inline Vec2 eval_vector(const Mesh& mesh, const VectorField& v, const QuadPoint& q) {
    return eval_vector(mesh, v, q.tri, q.bary);
}

/// Integral over the support triangles of a per-quadrature-point callback.
double integrate(const Mesh& mesh, const std::function<double(const QuadPoint&)>& f,
                 const QuadratureRule& rule, Support support);

/// Load vector b_a = integral of f * phi_a over the support of `dofs`.
Eigen::VectorXd assemble_load(const Mesh& mesh,
                              const std::function<double(const QuadPoint&)>& f,
                              const QuadratureRule& rule, const DofMap& dofs);

struct EigenPair {
    double lambda = 0.0;
    ScalarField z;          // M-normalised, largest-magnitude vertex positive
    int iterations = 0;
    double gap_ratio = 0.0; // (lambda_2 - lambda_1) / lambda_1 estimate
    bool simplicity_warning = false;
};

struct EigenOptions {
    double increment_tol = 1e-12;
    int max_iter = 500;
};

/// Smallest generalized eigenpair K z = lambda M z by inverse power iteration
/// with M-inner-product normalisation.
EigenPair smallest_eigenpair(const FeMatrix& k, const FeMatrix& m, const Mesh& mesh,
                             const EigenOptions& opts = {});

}  // namespace shapeopt
