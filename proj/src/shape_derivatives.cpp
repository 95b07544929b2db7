#include "shapeopt/shape_derivatives.hpp"

#include <cmath>

#include "shapeopt/errors.hpp"

namespace shapeopt {

double DualVector::pair(const VectorField& v) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[i] * v.xy[i];
    return sum;
}

double DualVector::norm() const {
    double sum = 0.0;
    for (double x : values) sum += x * x;
    return std::sqrt(sum);
}

DualVector& DualVector::operator+=(const DualVector& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
}

DualVector& DualVector::operator*=(double s) {
    for (double& x : values) x *= s;
    return *this;
}

Mat2 first_expansion(const Mat2& dv) {
    return Mat2::identity() * dv.trace() - dv - dv.transpose();
}

MatrixForms matrix_forms(const Mat2& dv, const Mat2& dw) {
    MatrixForms out;
    out.calA = first_expansion(dv);
    out.Dbrack = dv.trace() * dw.trace() - (dv * dw).trace();
    const Mat2 sym_products = dv * dw + dw * dv;
    out.Abrack = Mat2::identity() * out.Dbrack -
                 dv.trace() * (dw + dw.transpose()) -
                 dw.trace() * (dv + dv.transpose()) + sym_products +
                 sym_products.transpose() + dv * dw.transpose() +
                 dw * dv.transpose();
    return out;
}

double BilinearOperator::bilin(const VectorField& v, const VectorField& w) const {
    return apply(v).pair(w);
}

namespace {

struct QuadData {
    double w = 0.0;  // quadrature weight times element area
    Vec2 x;
    std::array<double, 3> bary{};
    double y1 = 0.0, y2 = 0.0, p1 = 0.0, p2 = 0.0;
    double j = 0.0, jy = 0.0, jyy = 0.0;
    Vec2 jx, jyx;
    Mat2 jxx;
    double F = 0.0;
    Vec2 gF;
    Mat2 hF;
};

struct ElemData {
    int tri = 0;
    double area = 0.0;
    std::array<int, 3> verts{};
    std::array<Vec2, 3> grad{};
    Vec2 gy1, gy2, gp1, gp2;
    std::vector<QuadData> qp;
};

double field_value(const ScalarField& f, const Mesh& mesh, int tri,
                   const std::array<double, 3>& bary) {
    if (f.values.empty()) return 0.0;
    return eval_scalar(mesh, f, tri, bary);
}

Vec2 field_gradient(const ScalarField& f, const Mesh& mesh, int tri) {
    if (f.values.empty()) return {0.0, 0.0};
    return scalar_gradient(mesh, f, tri);
}

std::vector<ElemData> build_cache(const ProblemSpec& problem, const Mesh& mesh,
                                  const State& state, const Adjoint& adjoint) {
    const QuadratureRule& rule = QuadratureRule::order4();
    std::vector<ElemData> cache;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (!mesh.in_omega[t]) continue;
        ElemData e;
        e.tri = t;
        e.verts = mesh.triangles[t];
        const TriGeometry g = tri_geometry(mesh, t);
        e.area = g.area;
        e.grad = g.grad;
        e.gy1 = field_gradient(state.y1, mesh, t);
        e.gy2 = field_gradient(state.y2, mesh, t);
        e.gp1 = field_gradient(adjoint.p1, mesh, t);
        e.gp2 = field_gradient(adjoint.p2, mesh, t);
        e.qp.resize(rule.points.size());
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            QuadData& d = e.qp[q];
            d.bary = rule.points[q];
            d.w = rule.weights[q] * g.area;
            d.x = point_at(mesh, t, d.bary);
            d.y1 = field_value(state.y1, mesh, t, d.bary);
            d.y2 = field_value(state.y2, mesh, t, d.bary);
            d.p1 = field_value(adjoint.p1, mesh, t, d.bary);
            d.p2 = field_value(adjoint.p2, mesh, t, d.bary);
            if (problem.integrand) {
                const auto& jj = *problem.integrand;
                const double y = (problem.kind == ProblemKind::NoPde) ? 0.0 : d.y1;
                d.j = jj.j(d.x, y);
                d.jy = jj.j_y(d.x, y);
                d.jyy = jj.j_yy(d.x, y);
                d.jx = jj.j_x(d.x, y);
                d.jyx = jj.j_yx(d.x, y);
                d.jxx = jj.j_xx(d.x, y);
            }
            if (problem.source) {
                const auto& src = *problem.source;
                d.F = src.F(d.x);
                d.gF = src.grad_F(d.x);
                d.hF = src.hess_F(d.x);
            }
        }
        cache.push_back(std::move(e));
    }
    return cache;
}

/// Stress of the DW-linear term calA[W] grad_a . grad_b (area included).
Mat2 calA_stress(const Vec2& ga, const Vec2& gb, double area) {
    return area * (Mat2::identity() * ga.dot(gb) - Mat2::outer(gb, ga) -
                   Mat2::outer(ga, gb));
}

/// Coefficient of DW in Dbrack[V, W] (so that Dbrack = DW : coefficient).
Mat2 dbrack_coef(const Mat2& dv) {
    return Mat2::identity() * dv.trace() - dv.transpose();
}

/// Stress of Abrack[V, W] grad_a . grad_b with V fixed (area included).
Mat2 abrack_stress(const Mat2& dv, const Vec2& ga, const Vec2& gb, double area) {
    Mat2 s;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            Mat2 eij;
            eij(i, j) = 1.0;
            s(i, j) = area * (matrix_forms(dv, eij).Abrack * ga).dot(gb);
        }
    return s;
}

/// Scatters a per-element stress S (pairing contribution DW : S) into the
/// covector. Basis fields exist only at interior hold-all vertices.
void scatter_stress(DualVector& out, const Mesh& mesh, const ElemData& e,
                    const Mat2& s) {
    for (int k = 0; k < 3; ++k) {
        const int v = e.verts[k];
        if (mesh.on_dirichlet_D[v]) continue;
        for (int c = 0; c < 2; ++c)
            out.values[2 * v + c] += s(c, 0) * e.grad[k].x + s(c, 1) * e.grad[k].y;
    }
}

/// Scatters a pointwise coefficient m (pairing contribution m . W(x_q), the
/// quadrature weight already folded into m).
void scatter_pointwise(DualVector& out, const Mesh& mesh, const ElemData& e,
                       const QuadData& q, const Vec2& m) {
    for (int k = 0; k < 3; ++k) {
        const int v = e.verts[k];
        if (mesh.on_dirichlet_D[v]) continue;
        out.values[2 * v + 0] += m.x * q.bary[k];
        out.values[2 * v + 1] += m.y * q.bary[k];
    }
}

/// Scalar covector scatter: gradient coefficient (area included) and
/// pointwise coefficient (weight included) against scalar test functions.
void scatter_scalar_grad(Eigen::VectorXd& out, const DofMap& dofs, const ElemData& e,
                         const Vec2& coef) {
    for (int k = 0; k < 3; ++k) {
        const int d = dofs.vertex_to_dof[e.verts[k]];
        if (d >= 0) out[d] += coef.dot(e.grad[k]);
    }
}

void scatter_scalar_pointwise(Eigen::VectorXd& out, const DofMap& dofs,
                              const ElemData& e, const QuadData& q, double coef) {
    for (int k = 0; k < 3; ++k) {
        const int d = dofs.vertex_to_dof[e.verts[k]];
        if (d >= 0) out[d] += coef * q.bary[k];
    }
}

DualVector assemble_JV_impl(const ProblemSpec& problem, const Mesh& mesh,
                            const std::vector<ElemData>& cache) {
    DualVector out(mesh.n_vertices());
    if (problem.kind == ProblemKind::Eigenvalue) return out;  // J(V,(z,l)) = l
    for (const ElemData& e : cache) {
        double sj = 0.0;
        for (const QuadData& q : e.qp) {
            sj += q.w * q.j;
            scatter_pointwise(out, mesh, e, q, q.w * q.jx);
        }
        scatter_stress(out, mesh, e, Mat2::identity() * sj);
    }
    return out;
}

DualVector assemble_eV_impl(const ProblemSpec& problem, const Mesh& mesh,
                            const State& state, const std::vector<ElemData>& cache,
                            const ScalarField& m1, const ScalarField& m2, double mu) {
    DualVector out(mesh.n_vertices());
    for (const ElemData& e : cache) {
        const Vec2 gm1 = field_gradient(m1, mesh, e.tri);
        const Vec2 gm2 = field_gradient(m2, mesh, e.tri);
        Mat2 stress;
        switch (problem.kind) {
            case ProblemKind::NoPde:
                return out;
            case ProblemKind::Poisson: {
                stress = calA_stress(e.gy1, gm1, e.area);
                double sFp = 0.0;
                for (const QuadData& q : e.qp) {
                    const double m1v = field_value(m1, mesh, e.tri, q.bary);
                    sFp += q.w * q.F * m1v;
                    scatter_pointwise(out, mesh, e, q, -q.w * m1v * q.gF);
                }
                stress += Mat2::identity() * (-sFp);
                break;
            }
            case ProblemKind::CoupledPoisson: {
                stress = calA_stress(e.gy1, gm2, e.area) +
                         calA_stress(e.gy2, gm1, e.area);
                double s = 0.0;
                for (const QuadData& q : e.qp) {
                    const double m1v = field_value(m1, mesh, e.tri, q.bary);
                    const double m2v = field_value(m2, mesh, e.tri, q.bary);
                    s += q.w * (q.y2 * m2v + q.F * m1v);
                    scatter_pointwise(out, mesh, e, q, -q.w * m1v * q.gF);
                }
                stress += Mat2::identity() * (-s);
                break;
            }
            case ProblemKind::Eigenvalue: {
                stress = calA_stress(e.gy1, gm1, e.area);
                double s = 0.0;
                for (const QuadData& q : e.qp) {
                    const double m1v = field_value(m1, mesh, e.tri, q.bary);
                    s += q.w * (state.lambda * q.y1 * m1v + mu * q.y1 * q.y1);
                }
                stress += Mat2::identity() * (-s);
                break;
            }
        }
        scatter_stress(out, mesh, e, stress);
    }
    return out;
}

void require_adjoint(const ProblemSpec& problem, const Mesh& mesh,
                     const Adjoint& adjoint) {
    if (problem.kind == ProblemKind::NoPde) return;
    if (adjoint.kind != problem.kind ||
        adjoint.p1.values.size() != static_cast<std::size_t>(mesh.n_vertices()))
        throw ContractViolation("first_derivative: missing or mismatched adjoint");
    if (problem.kind == ProblemKind::CoupledPoisson &&
        adjoint.p2.values.size() != static_cast<std::size_t>(mesh.n_vertices()))
        throw ContractViolation("first_derivative: missing coupled adjoint pair");
}

}  // namespace

DualVector first_derivative(const ProblemSpec& problem, const Mesh& mesh,
                            const State& state, const Adjoint& adjoint) {
    require_adjoint(problem, mesh, adjoint);
    const auto cache = build_cache(problem, mesh, state, adjoint);
    DualVector out(mesh.n_vertices());
    for (const ElemData& e : cache) {
        Mat2 stress;
        switch (problem.kind) {
            case ProblemKind::NoPde: {
                double sj = 0.0;
                for (const QuadData& q : e.qp) {
                    sj += q.w * q.j;
                    scatter_pointwise(out, mesh, e, q, q.w * q.jx);
                }
                stress = Mat2::identity() * sj;
                break;
            }
            case ProblemKind::Poisson: {
                stress = calA_stress(e.gy1, e.gp1, e.area);
                double s = 0.0;
                for (const QuadData& q : e.qp) {
                    s += q.w * (q.j - q.F * q.p1);
                    scatter_pointwise(out, mesh, e, q, q.w * (q.jx - q.p1 * q.gF));
                }
                stress += Mat2::identity() * s;
                break;
            }
            case ProblemKind::CoupledPoisson: {
                stress = calA_stress(e.gy1, e.gp2, e.area) +
                         calA_stress(e.gy2, e.gp1, e.area);
                double s = 0.0;
                for (const QuadData& q : e.qp) {
                    s += q.w * (q.j - q.y2 * q.p2 - q.F * q.p1);
                    scatter_pointwise(out, mesh, e, q, q.w * (q.jx - q.p1 * q.gF));
                }
                stress += Mat2::identity() * s;
                break;
            }
            case ProblemKind::Eigenvalue: {
                stress = calA_stress(e.gy1, e.gy1, e.area);
                double s = 0.0;
                for (const QuadData& q : e.qp) s += q.w * q.y1 * q.y1;
                stress += Mat2::identity() * (-state.lambda * s);
                break;
            }
        }
        scatter_stress(out, mesh, e, stress);
    }
    return out;
}

DualVector assemble_JV(const ProblemSpec& problem, const Mesh& mesh,
                       const State& state) {
    Adjoint none;
    none.kind = problem.kind;
    const auto cache = build_cache(problem, mesh, state, none);
    return assemble_JV_impl(problem, mesh, cache);
}

DualVector assemble_eV(const ProblemSpec& problem, const Mesh& mesh, const State& state,
                       const Adjoint& multiplier) {
    const auto cache = build_cache(problem, mesh, state, multiplier);
    return assemble_eV_impl(problem, mesh, state, cache, multiplier.p1, multiplier.p2,
                            multiplier.mu);
}

// ---------------------------------------------------------------------------
// Second derivative machinery
// ---------------------------------------------------------------------------

struct HessianOperator::Impl {
    ProblemSpec problem;
    Mesh mesh;
    State state;
    Adjoint adjoint;
    std::vector<ElemData> cache;
    DofMap sdofs;

    std::unique_ptr<SpdSolver> ksolver;          // Poisson / Coupled
    Eigen::SparseMatrix<double> mass;            // Coupled / Eigenvalue
    Eigen::SparseLU<Eigen::SparseMatrix<double>> bordered;  // Eigenvalue
    Eigen::VectorXd zdof, mz;                    // Eigenvalue

    struct FieldData {
        Mat2 dv;
        double divv;
        std::vector<Vec2> at_qp;  // V at the quadrature points, per element
    };

    std::vector<FieldData> field_data(const VectorField& v) const {
        std::vector<FieldData> out(cache.size());
        for (std::size_t i = 0; i < cache.size(); ++i) {
            const ElemData& e = cache[i];
            FieldData& f = out[i];
            f.dv = field_jacobian(mesh, v, e.tri);
            f.divv = f.dv.trace();
            f.at_qp.resize(e.qp.size());
            for (std::size_t q = 0; q < e.qp.size(); ++q)
                f.at_qp[q] = eval_vector(mesh, v, e.tri, e.qp[q].bary);
        }
        return out;
    }

    StatePerturbation solve_sensitivity(const std::vector<FieldData>& fd) const;
    DualVector apply_impl(const VectorField& v) const;
};

HessianOperator::HessianOperator(const ProblemSpec& problem, const Mesh& mesh,
                                 const State& state, const Adjoint& adjoint)
    : impl_(std::make_unique<Impl>()) {
    impl_->problem = problem;
    impl_->mesh = mesh;
    impl_->state = state;
    impl_->adjoint = adjoint;
    impl_->cache = build_cache(problem, mesh, state, adjoint);
    if (problem.kind == ProblemKind::NoPde) return;

    const FeMatrix k = assemble_stiffness(mesh, Support::Omega);
    impl_->sdofs = k.dofs;
    switch (problem.kind) {
        case ProblemKind::Poisson:
            impl_->ksolver = std::make_unique<SpdSolver>(k);
            break;
        case ProblemKind::CoupledPoisson:
            impl_->ksolver = std::make_unique<SpdSolver>(k);
            impl_->mass = assemble_mass(mesh, Support::Omega).mat;
            break;
        case ProblemKind::Eigenvalue: {
            impl_->mass = assemble_mass(mesh, Support::Omega).mat;
            impl_->zdof = restrict_to_dofs(state.y1, k.dofs);
            impl_->mz = impl_->mass * impl_->zdof;
            // Symmetric bordered matrix [[K - lambda M, -Mz], [-(Mz)^T, 0]];
            // nonsingular for a simple eigenvalue.
            const int n = k.dofs.count();
            Eigen::SparseMatrix<double> shifted = k.mat - state.lambda * impl_->mass;
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(shifted.nonZeros() + 2 * n);
            for (int col = 0; col < shifted.outerSize(); ++col)
                for (Eigen::SparseMatrix<double>::InnerIterator it(shifted, col); it;
                     ++it)
                    trip.emplace_back(it.row(), it.col(), it.value());
            for (int i = 0; i < n; ++i) {
                trip.emplace_back(i, n, -impl_->mz[i]);
                trip.emplace_back(n, i, -impl_->mz[i]);
            }
            Eigen::SparseMatrix<double> b(n + 1, n + 1);
            b.setFromTriplets(trip.begin(), trip.end());
            impl_->bordered.compute(b);
            if (impl_->bordered.info() != Eigen::Success)
                throw SolverError("bordered eigenvalue system factorisation failed "
                                  "(near-multiple eigenvalue?)");
            break;
        }
        default:
            break;
    }
}

HessianOperator::HessianOperator(HessianOperator&&) noexcept = default;
HessianOperator& HessianOperator::operator=(HessianOperator&&) noexcept = default;
HessianOperator::~HessianOperator() = default;

StatePerturbation HessianOperator::Impl::solve_sensitivity(
    const std::vector<FieldData>& fd) const {
    StatePerturbation out;
    out.kind = problem.kind;
    if (problem.kind == ProblemKind::NoPde) return out;
    const int n = sdofs.count();

    switch (problem.kind) {
        case ProblemKind::Poisson: {
            Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
            for (std::size_t i = 0; i < cache.size(); ++i) {
                const ElemData& e = cache[i];
                const Mat2 a = first_expansion(fd[i].dv);
                scatter_scalar_grad(r, sdofs, e, -e.area * (a * e.gy1));
                for (std::size_t q = 0; q < e.qp.size(); ++q)
                    scatter_scalar_pointwise(
                        r, sdofs, e, e.qp[q],
                        e.qp[q].w * (e.qp[q].F * fd[i].divv + fd[i].at_qp[q].dot(e.qp[q].gF)));
            }
            out.dy1 = expand_from_dofs(ksolver->solve(r), sdofs, mesh.n_vertices());
            break;
        }
        case ProblemKind::CoupledPoisson: {
            Eigen::VectorXd r2 = Eigen::VectorXd::Zero(n);
            Eigen::VectorXd r1 = Eigen::VectorXd::Zero(n);
            for (std::size_t i = 0; i < cache.size(); ++i) {
                const ElemData& e = cache[i];
                const Mat2 a = first_expansion(fd[i].dv);
                scatter_scalar_grad(r2, sdofs, e, -e.area * (a * e.gy2));
                scatter_scalar_grad(r1, sdofs, e, -e.area * (a * e.gy1));
                for (std::size_t q = 0; q < e.qp.size(); ++q) {
                    const QuadData& qd = e.qp[q];
                    scatter_scalar_pointwise(
                        r2, sdofs, e, qd,
                        qd.w * (qd.F * fd[i].divv + fd[i].at_qp[q].dot(qd.gF)));
                    scatter_scalar_pointwise(r1, sdofs, e, qd,
                                             qd.w * fd[i].divv * qd.y2);
                }
            }
            const Eigen::VectorXd dy2 = ksolver->solve(r2);
            const Eigen::VectorXd dy1 = ksolver->solve(r1 + mass * dy2);
            out.dy1 = expand_from_dofs(dy1, sdofs, mesh.n_vertices());
            out.dy2 = expand_from_dofs(dy2, sdofs, mesh.n_vertices());
            break;
        }
        case ProblemKind::Eigenvalue: {
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
            double s = 0.0;
            for (std::size_t i = 0; i < cache.size(); ++i) {
                const ElemData& e = cache[i];
                const Mat2 a = first_expansion(fd[i].dv);
                scatter_scalar_grad(rhs, sdofs, e, -e.area * (a * e.gy1));
                for (std::size_t q = 0; q < e.qp.size(); ++q) {
                    const QuadData& qd = e.qp[q];
                    scatter_scalar_pointwise(rhs, sdofs, e, qd,
                                             qd.w * state.lambda * fd[i].divv * qd.y1);
                    s += qd.w * fd[i].divv * qd.y1 * qd.y1;
                }
            }
            rhs[n] = 0.5 * s;
            const Eigen::VectorXd sol = bordered.solve(rhs);
            out.dy1 = expand_from_dofs(sol.head(n), sdofs, mesh.n_vertices());
            out.dlambda = sol[n];
            break;
        }
        default:
            break;
    }
    return out;
}

DualVector HessianOperator::Impl::apply_impl(const VectorField& v) const {
    const std::vector<FieldData> fd = field_data(v);
    DualVector out(mesh.n_vertices());

    if (problem.kind == ProblemKind::NoPde) {
        // Only J_VV contributes.
        for (std::size_t i = 0; i < cache.size(); ++i) {
            const ElemData& e = cache[i];
            Mat2 stress;
            double sj = 0.0, sjxv = 0.0;
            for (std::size_t q = 0; q < e.qp.size(); ++q) {
                const QuadData& qd = e.qp[q];
                sj += qd.w * qd.j;
                sjxv += qd.w * qd.jx.dot(fd[i].at_qp[q]);
                scatter_pointwise(out, mesh, e, qd,
                                  qd.w * (fd[i].divv * qd.jx + qd.jxx * fd[i].at_qp[q]));
            }
            stress += sj * dbrack_coef(fd[i].dv) + Mat2::identity() * sjxv;
            scatter_stress(out, mesh, e, stress);
        }
        return out;
    }

    const StatePerturbation pert = solve_sensitivity(fd);
    const int n = sdofs.count();

    // h1 and the second adjoint g.
    ScalarField g1, g2;
    double gmu = 0.0;
    switch (problem.kind) {
        case ProblemKind::Poisson: {
            Eigen::VectorXd h1 = Eigen::VectorXd::Zero(n);
            for (std::size_t i = 0; i < cache.size(); ++i) {
                const ElemData& e = cache[i];
                const Mat2 a = first_expansion(fd[i].dv);
                scatter_scalar_grad(h1, sdofs, e, e.area * (a * e.gp1));
                for (std::size_t q = 0; q < e.qp.size(); ++q) {
                    const QuadData& qd = e.qp[q];
                    const double dy = field_value(pert.dy1, mesh, e.tri, qd.bary);
                    scatter_scalar_pointwise(
                        h1, sdofs, e, qd,
                        qd.w * (qd.jyy * dy + fd[i].divv * qd.jy +
                                qd.jyx.dot(fd[i].at_qp[q])));
                }
            }
            g1 = expand_from_dofs(ksolver->solve(h1), sdofs, mesh.n_vertices());
            break;
        }
        case ProblemKind::CoupledPoisson: {
            Eigen::VectorXd h11 = Eigen::VectorXd::Zero(n);
            Eigen::VectorXd h12 = Eigen::VectorXd::Zero(n);
            for (std::size_t i = 0; i < cache.size(); ++i) {
                const ElemData& e = cache[i];
                const Mat2 a = first_expansion(fd[i].dv);
                scatter_scalar_grad(h11, sdofs, e, e.area * (a * e.gp2));
                scatter_scalar_grad(h12, sdofs, e, e.area * (a * e.gp1));
                for (std::size_t q = 0; q < e.qp.size(); ++q) {
                    const QuadData& qd = e.qp[q];
                    const double dy1 = field_value(pert.dy1, mesh, e.tri, qd.bary);
                    scatter_scalar_pointwise(
                        h11, sdofs, e, qd,
                        qd.w * (qd.jyy * dy1 + fd[i].divv * qd.jy +
                                qd.jyx.dot(fd[i].at_qp[q])));
                    scatter_scalar_pointwise(h12, sdofs, e, qd,
                                             -qd.w * fd[i].divv * qd.p2);
                }
            }
            const Eigen::VectorXd g2d = ksolver->solve(h11);
            const Eigen::VectorXd g1d = ksolver->solve(h12 + mass * g2d);
            g1 = expand_from_dofs(g1d, sdofs, mesh.n_vertices());
            g2 = expand_from_dofs(g2d, sdofs, mesh.n_vertices());
            break;
        }
        case ProblemKind::Eigenvalue: {
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
            double s_divzz = 0.0;
            for (std::size_t i = 0; i < cache.size(); ++i) {
                const ElemData& e = cache[i];
                const Mat2 a = first_expansion(fd[i].dv);
                scatter_scalar_grad(rhs, sdofs, e, e.area * (a * e.gy1));
                for (std::size_t q = 0; q < e.qp.size(); ++q) {
                    const QuadData& qd = e.qp[q];
                    scatter_scalar_pointwise(
                        rhs, sdofs, e, qd,
                        qd.w * (-state.lambda * fd[i].divv * qd.y1 -
                                pert.dlambda * qd.y1));
                    s_divzz += qd.w * fd[i].divv * qd.y1 * qd.y1;
                }
            }
            const Eigen::VectorXd dz = restrict_to_dofs(pert.dy1, sdofs);
            rhs[n] = -dz.dot(mz) - s_divzz;
            const Eigen::VectorXd sol = bordered.solve(rhs);
            g1 = expand_from_dofs(sol.head(n), sdofs, mesh.n_vertices());
            gmu = 0.5 * sol[n];
            break;
        }
        default:
            break;
    }

    // h2 + h3.
    for (std::size_t i = 0; i < cache.size(); ++i) {
        const ElemData& e = cache[i];
        const Mat2& dv = fd[i].dv;
        const double divv = fd[i].divv;
        const Vec2 g_dy1 = field_gradient(pert.dy1, mesh, e.tri);
        const Vec2 g_dy2 = field_gradient(pert.dy2, mesh, e.tri);
        const Vec2 g_g1 = field_gradient(g1, mesh, e.tri);
        const Vec2 g_g2 = field_gradient(g2, mesh, e.tri);
        Mat2 stress;
        switch (problem.kind) {
            case ProblemKind::Poisson: {
                stress = calA_stress(g_dy1, e.gp1, e.area) +
                         abrack_stress(dv, e.gy1, e.gp1, e.area) -
                         calA_stress(e.gy1, g_g1, e.area);
                double s_jyd = 0.0, s_j = 0.0, s_jxv = 0.0, s_Fp = 0.0, s_pvF = 0.0,
                       s_Fg = 0.0;
                for (std::size_t q = 0; q < e.qp.size(); ++q) {
                    const QuadData& qd = e.qp[q];
                    const Vec2& vq = fd[i].at_qp[q];
                    const double dy = field_value(pert.dy1, mesh, e.tri, qd.bary);
                    const double gv = field_value(g1, mesh, e.tri, qd.bary);
                    s_jyd += qd.w * qd.jy * dy;
                    s_j += qd.w * qd.j;
                    s_jxv += qd.w * qd.jx.dot(vq);
                    s_Fp += qd.w * qd.F * qd.p1;
                    s_pvF += qd.w * qd.p1 * vq.dot(qd.gF);
                    s_Fg += qd.w * qd.F * gv;
                    scatter_pointwise(
                        out, mesh, e, qd,
                        qd.w * (dy * qd.jyx + divv * qd.jx + qd.jxx * vq -
                                qd.p1 * divv * qd.gF - qd.p1 * (qd.hF * vq) +
                                gv * qd.gF));
                }
                stress += Mat2::identity() * (s_jyd + s_jxv - s_pvF + s_Fg) +
                          (s_j - s_Fp) * dbrack_coef(dv);
                break;
            }
            case ProblemKind::CoupledPoisson: {
                stress = calA_stress(g_dy1, e.gp2, e.area) +
                         calA_stress(g_dy2, e.gp1, e.area) +
                         abrack_stress(dv, e.gy1, e.gp2, e.area) +
                         abrack_stress(dv, e.gy2, e.gp1, e.area) -
                         calA_stress(e.gy1, g_g2, e.area) -
                         calA_stress(e.gy2, g_g1, e.area);
                double s_jyd = 0.0, s_dy2p2 = 0.0, s_j = 0.0, s_jxv = 0.0,
                       s_y2p2 = 0.0, s_Fp = 0.0, s_pvF = 0.0, s_y2g2 = 0.0,
                       s_Fg1 = 0.0;
                for (std::size_t q = 0; q < e.qp.size(); ++q) {
                    const QuadData& qd = e.qp[q];
                    const Vec2& vq = fd[i].at_qp[q];
                    const double dy1 = field_value(pert.dy1, mesh, e.tri, qd.bary);
                    const double dy2 = field_value(pert.dy2, mesh, e.tri, qd.bary);
                    const double g1v = field_value(g1, mesh, e.tri, qd.bary);
                    const double g2v = field_value(g2, mesh, e.tri, qd.bary);
                    s_jyd += qd.w * qd.jy * dy1;
                    s_dy2p2 += qd.w * dy2 * qd.p2;
                    s_j += qd.w * qd.j;
                    s_jxv += qd.w * qd.jx.dot(vq);
                    s_y2p2 += qd.w * qd.y2 * qd.p2;
                    s_Fp += qd.w * qd.F * qd.p1;
                    s_pvF += qd.w * qd.p1 * vq.dot(qd.gF);
                    s_y2g2 += qd.w * qd.y2 * g2v;
                    s_Fg1 += qd.w * qd.F * g1v;
                    scatter_pointwise(
                        out, mesh, e, qd,
                        qd.w * (dy1 * qd.jyx + divv * qd.jx + qd.jxx * vq -
                                qd.p1 * divv * qd.gF - qd.p1 * (qd.hF * vq) +
                                g1v * qd.gF));
                }
                stress += Mat2::identity() *
                              (s_jyd - s_dy2p2 + s_jxv - s_pvF + s_y2g2 + s_Fg1) +
                          (s_j - s_y2p2 - s_Fp) * dbrack_coef(dv);
                break;
            }
            case ProblemKind::Eigenvalue: {
                stress = calA_stress(g_dy1, e.gy1, e.area) +
                         abrack_stress(dv, e.gy1, e.gy1, e.area) -
                         calA_stress(e.gy1, g_g1, e.area);
                double s_dzz = 0.0, s_zz = 0.0, s_zg = 0.0;
                for (std::size_t q = 0; q < e.qp.size(); ++q) {
                    const QuadData& qd = e.qp[q];
                    const double dz = field_value(pert.dy1, mesh, e.tri, qd.bary);
                    const double gv = field_value(g1, mesh, e.tri, qd.bary);
                    s_dzz += qd.w * dz * qd.y1;
                    s_zz += qd.w * qd.y1 * qd.y1;
                    s_zg += qd.w * qd.y1 * gv;
                }
                stress += Mat2::identity() *
                              (-state.lambda * s_dzz - pert.dlambda * s_zz +
                               state.lambda * s_zg + gmu * s_zz) -
                          state.lambda * s_zz * dbrack_coef(dv);
                break;
            }
            default:
                break;
        }
        scatter_stress(out, mesh, e, stress);
    }
    return out;
}

DualVector HessianOperator::apply(const VectorField& v) const {
    return impl_->apply_impl(v);
}

StatePerturbation HessianOperator::sensitivity(const VectorField& v) const {
    return impl_->solve_sensitivity(impl_->field_data(v));
}

StatePerturbation sensitivity(const ProblemSpec& problem, const Mesh& mesh,
                              const State& state, const VectorField& v) {
    if (problem.kind == ProblemKind::NoPde) {
        StatePerturbation out;
        out.kind = problem.kind;
        return out;
    }
    Adjoint none;
    none.kind = problem.kind;
    return HessianOperator(problem, mesh, state, none).sensitivity(v);
}

HessianOperator hessian(const ProblemSpec& problem, const Mesh& mesh,
                        const State& state, const Adjoint& adjoint) {
    return {problem, mesh, state, adjoint};
}

}  // namespace shapeopt
