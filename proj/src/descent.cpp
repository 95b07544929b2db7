#include "shapeopt/descent.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <ostream>

#include "shapeopt/errors.hpp"

namespace shapeopt {

Mat2 project_spectral_ball(const Mat2& m) {
    const Svd2 svd = svd2(m);
    if (svd.s1 <= 1.0) return m;
    const double s1 = std::min(svd.s1, 1.0);
    const double s2 = std::min(svd.s2, 1.0) * svd.sign2;
    const Mat2 sigma{s1, 0.0, 0.0, s2};
    return svd.u * sigma * svd.v.transpose();
}

double directional_value(const DualVector& grad, const BilinearOperator* hess,
                         double t, const VectorField& v) {
    double value = grad.pair(v);
    if (t != 0.0) {
        if (hess == nullptr)
            throw ContractViolation("directional_value: t > 0 requires a Hessian");
        value += 0.5 * t * hess->bilin(v, v);
    }
    return value;
}

DualVector area_constraint_covector(const Mesh& mesh) {
    DualVector c(mesh.n_vertices());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (!mesh.in_omega[t]) continue;
        const TriGeometry g = tri_geometry(mesh, t);
        for (int k = 0; k < 3; ++k) {
            const int v = mesh.triangles[t][k];
            if (mesh.on_dirichlet_D[v]) continue;
            c.values[2 * v + 0] += g.area * g.grad[k].x;
            c.values[2 * v + 1] += g.area * g.grad[k].y;
        }
    }
    return c;
}

double max_spectral_jacobian(const Mesh& mesh, const VectorField& v) {
    double s = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t)
        s = std::max(s, spectral_norm(field_jacobian(mesh, v, t)));
    return s;
}

void AdmmDiagnostics::write_csv(std::ostream& os) const {
    os << "# iter,tau,residual,objective\n";
    for (const auto& it : iterations)
        os << it.iter << ',' << it.tau << ',' << it.residual << ',' << it.objective
           << '\n';
}

namespace {

struct NegativeCurvature : Error {
    using Error::Error;
};

/// Free vector-field dofs (two per non-boundary vertex) and the Dirichlet
/// gradient Gram matrix over the hold-all.
struct VectorSpace {
    const Mesh* mesh = nullptr;
    std::vector<int> vertex_to_free;  // -1 on the hold-all boundary
    std::vector<int> free_to_vertex;
    std::vector<TriGeometry> geom;
    Eigen::SparseMatrix<double> gram;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> gram_ldlt;

    int n() const { return 2 * static_cast<int>(free_to_vertex.size()); }

    explicit VectorSpace(const Mesh& m) : mesh(&m) {
        vertex_to_free.assign(m.n_vertices(), -1);
        for (int v = 0; v < m.n_vertices(); ++v)
            if (!m.on_dirichlet_D[v]) {
                vertex_to_free[v] = static_cast<int>(free_to_vertex.size());
                free_to_vertex.push_back(v);
            }
        geom.resize(m.n_triangles());
        for (int t = 0; t < m.n_triangles(); ++t) geom[t] = tri_geometry(m, t);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(18 * m.n_triangles());
        for (int t = 0; t < m.n_triangles(); ++t) {
            const TriGeometry& g = geom[t];
            for (int a = 0; a < 3; ++a) {
                const int fa = vertex_to_free[m.triangles[t][a]];
                if (fa < 0) continue;
                for (int b = 0; b < 3; ++b) {
                    const int fb = vertex_to_free[m.triangles[t][b]];
                    if (fb < 0) continue;
                    const double k = g.area * g.grad[a].dot(g.grad[b]);
                    trip.emplace_back(2 * fa, 2 * fb, k);
                    trip.emplace_back(2 * fa + 1, 2 * fb + 1, k);
                }
            }
        }
        gram.resize(n(), n());
        gram.setFromTriplets(trip.begin(), trip.end());
        gram_ldlt.compute(gram);
        if (gram_ldlt.info() != Eigen::Success)
            throw SolverError("vector Gram matrix factorisation failed");
    }

    Eigen::VectorXd restrict(const DualVector& d) const {
        Eigen::VectorXd out(n());
        for (std::size_t f = 0; f < free_to_vertex.size(); ++f) {
            out[2 * f] = d.values[2 * free_to_vertex[f]];
            out[2 * f + 1] = d.values[2 * free_to_vertex[f] + 1];
        }
        return out;
    }

    Eigen::VectorXd restrict(const VectorField& v) const {
        Eigen::VectorXd out(n());
        for (std::size_t f = 0; f < free_to_vertex.size(); ++f) {
            out[2 * f] = v.xy[2 * free_to_vertex[f]];
            out[2 * f + 1] = v.xy[2 * free_to_vertex[f] + 1];
        }
        return out;
    }

    VectorField expand(const Eigen::VectorXd& x) const {
        VectorField v(mesh->n_vertices());
        for (std::size_t f = 0; f < free_to_vertex.size(); ++f) {
            v.xy[2 * free_to_vertex[f]] = x[2 * f];
            v.xy[2 * free_to_vertex[f] + 1] = x[2 * f + 1];
        }
        return v;
    }

    /// Covector of W -> sum_T area_T (M_T : DW_T).
    Eigen::VectorXd matrix_pairing(const std::vector<Mat2>& per_element) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n());
        const Mesh& m = *mesh;
        for (int t = 0; t < m.n_triangles(); ++t) {
            const TriGeometry& g = geom[t];
            const Mat2& s = per_element[t];
            for (int k = 0; k < 3; ++k) {
                const int f = vertex_to_free[m.triangles[t][k]];
                if (f < 0) continue;
                out[2 * f] += g.area * (s(0, 0) * g.grad[k].x + s(0, 1) * g.grad[k].y);
                out[2 * f + 1] +=
                    g.area * (s(1, 0) * g.grad[k].x + s(1, 1) * g.grad[k].y);
            }
        }
        return out;
    }
};

std::vector<Mat2> element_jacobians(const VectorSpace& space, const VectorField& v) {
    const Mesh& m = *space.mesh;
    std::vector<Mat2> out(m.n_triangles());
    for (int t = 0; t < m.n_triangles(); ++t) {
        Mat2 dv;
        for (int k = 0; k < 3; ++k)
            dv += Mat2::outer(v.at(m.triangles[t][k]), space.geom[t].grad[k]);
        out[t] = dv;
    }
    return out;
}

struct CgOutcome {
    Eigen::VectorXd x;
    Eigen::VectorXd ax;
    int iterations = 0;
};

/// Preconditioned CG for the symmetric V-step operator; throws on detected
/// negative curvature.
template <typename Apply, typename Prec>
CgOutcome pcg(const Apply& apply, const Prec& prec, const Eigen::VectorXd& b,
              const Eigen::VectorXd& x0, double rel_tol, int max_iter) {
    CgOutcome out;
    out.x = x0;
    Eigen::VectorXd ax = apply(out.x);
    Eigen::VectorXd r = b - ax;
    const double target = rel_tol * std::max(b.norm(), 1e-300);
    if (r.norm() <= target) {
        out.ax = ax;
        return out;
    }
    Eigen::VectorXd z = prec(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd ap = apply(p);
        const double pap = p.dot(ap);
        if (pap <= 0.0)
            throw NegativeCurvature("non-positive curvature in the V-step solve");
        const double alpha = rz / pap;
        out.x += alpha * p;
        ax += alpha * ap;
        r -= alpha * ap;
        out.iterations = it + 1;
        if (r.norm() <= target) break;
        z = prec(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    if (r.norm() > target)
        throw DirectionError("V-step Krylov solve did not converge");
    out.ax = ax;
    return out;
}

VectorField p2_direction_raw(const VectorSpace& space, const Eigen::VectorXd& grad,
                             const Eigen::VectorXd* area_row) {
    Eigen::VectorXd x = space.gram_ldlt.solve(-grad);
    if (area_row != nullptr) {
        const Eigen::VectorXd gc = space.gram_ldlt.solve(*area_row);
        x -= gc * (area_row->dot(x) / area_row->dot(gc));
    }
    return space.expand(x);
}

double sup_seminorm(const Mesh& mesh, const VectorField& v) {
    return max_spectral_jacobian(mesh, v);
}

void validate_request(const DirectionRequest& req) {
    if (req.grad == nullptr || req.mesh == nullptr)
        throw ContractViolation("direction request missing grad or mesh");
    if (req.grad->norm() == 0.0)
        throw ContractViolation("direction request requires a nonzero gradient");
    if (req.newton_t > 0.0 && req.hess == nullptr)
        throw ContractViolation("newton_t > 0 requires a Hessian operator");
    if (req.newton_t < 0.0 || req.newton_t >= 1.0)
        if (req.newton_t != 0.0)
            throw ContractViolation("newton_t must lie in [0, 1)");
}

std::pair<VectorField, AdmmDiagnostics> admm_core(const DirectionRequest& req,
                                                  const AdmmOptions& opts, double t) {
    const Mesh& mesh = *req.mesh;
    const VectorSpace space(mesh);
    const int ntri = mesh.n_triangles();
    const double tol =
        opts.tol > 0.0 ? opts.tol : 1e-6 * std::sqrt(static_cast<double>(ntri));

    const Eigen::VectorXd grad = space.restrict(*req.grad);
    Eigen::VectorXd area_row;
    const Eigen::VectorXd* area_ptr = nullptr;
    if (req.area_constrained) {
        area_row = space.restrict(area_constraint_covector(mesh));
        area_ptr = &area_row;
    }

    // Step 0: warm start from the normalised Hilbert direction.
    VectorField v = p2_direction_raw(space, grad, area_ptr);
    {
        const double s = sup_seminorm(mesh, v);
        if (s > 0.0) {
            for (double& c : v.xy) c /= s;
        }
    }
    Eigen::VectorXd x = space.restrict(v);

    double tau = opts.tau0;
    std::vector<Mat2> lambda(ntri), q(ntri), q_prev(ntri);
    std::vector<Mat2> dv = element_jacobians(space, v), dv_prev;

    const auto apply_hess = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
        return space.restrict(req.hess->apply(space.expand(y)));
    };
    const auto apply_step = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
        Eigen::VectorXd ay = tau * (space.gram * y);
        if (t != 0.0) ay += t * apply_hess(y);
        return ay;
    };
    const auto prec = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
        return space.gram_ldlt.solve(r) / tau;
    };

    Eigen::VectorXd area_dir;  // A^{-1} c, recomputed when tau changes
    bool area_dir_valid = false;
    Eigen::VectorXd gram_area_dir;  // G^{-1} c, tau-independent
    if (area_ptr != nullptr) gram_area_dir = space.gram_ldlt.solve(area_row);

    AdmmDiagnostics diag;
    for (int j = 1; j <= opts.max_iter; ++j) {
        // Step 2: project DV + lambda / tau onto the spectral ball, per element.
        q_prev = q;
        for (int e = 0; e < ntri; ++e)
            q[e] = project_spectral_ball(dv[e] + lambda[e] * (1.0 / tau));

        // Step 3: quadratic V-step.
        std::vector<Mat2> weight(ntri);
        for (int e = 0; e < ntri; ++e) weight[e] = tau * q[e] - lambda[e];
        const Eigen::VectorXd rhs = space.matrix_pairing(weight) - grad;

        double objective;
        if (t == 0.0) {
            Eigen::VectorXd u = space.gram_ldlt.solve(rhs);
            if (area_ptr != nullptr)
                u -= gram_area_dir *
                     (area_row.dot(u) / area_row.dot(gram_area_dir));
            x = u / tau;
            objective = grad.dot(x);
        } else {
            if (area_ptr != nullptr && !area_dir_valid) {
                area_dir = pcg(apply_step, prec, area_row,
                               Eigen::VectorXd::Zero(space.n()), 1e-12, 2000)
                               .x;
                area_dir_valid = true;
            }
            CgOutcome sol = pcg(apply_step, prec, rhs, x, 1e-10, 2000);
            if (area_ptr != nullptr) {
                const double m = area_row.dot(sol.x) / area_row.dot(area_dir);
                sol.x -= m * area_dir;
                sol.ax -= m * apply_step(area_dir);
            }
            x = sol.x;
            // t/2 x^T H x recovered from the operator product.
            const double xax = x.dot(sol.ax);
            const double xgx = x.dot(space.gram * x);
            objective = grad.dot(x) + 0.5 * (xax - tau * xgx);
        }
        v = space.expand(x);
        dv_prev = std::move(dv);
        dv = element_jacobians(space, v);

        // Steps 4-5: multiplier update and residual.
        double dv_diff = 0.0, primal2 = 0.0;
        for (int e = 0; e < ntri; ++e) {
            const double area = space.geom[e].area;
            const Mat2 gap = dv[e] - q[e];
            lambda[e] += tau * gap;
            primal2 += area * gap.frobenius2();
            dv_diff += area * (dv[e] - dv_prev[e]).frobenius2();
        }
        const double residual = std::sqrt(tau * tau * (primal2 + dv_diff));
        diag.iterations.push_back({j, tau, residual, objective});

        if (residual <= tol) {
            diag.converged = true;
            break;
        }

        // Residual balancing every 10 iterations.
        if (opts.adaptive_tau && j % 10 == 0 && j > 1) {
            double dual2 = 0.0;
            for (int e = 0; e < ntri; ++e)
                dual2 += space.geom[e].area * (q[e] - q_prev[e]).frobenius2();
            const double rp = std::sqrt(primal2);
            const double rd = tau * std::sqrt(dual2);
            if (rp > 10.0 * rd) {
                tau *= 2.0;
                area_dir_valid = false;
            } else if (rd > 10.0 * rp) {
                tau *= 0.5;
                area_dir_valid = false;
            }
        }
    }

    // Feasibility clip by global rescale.
    const double s = sup_seminorm(mesh, v);
    if (s > 1.0 + 1e-8) {
        for (double& c : v.xy) c /= s;
    }
    diag.final_objective =
        directional_value(*req.grad, t != 0.0 ? req.hess : nullptr, t, v);
    return {std::move(v), std::move(diag)};
}

}  // namespace

std::pair<VectorField, AdmmDiagnostics> admm_direction(const DirectionRequest& req,
                                                       const AdmmOptions& opts) {
    validate_request(req);
    try {
        return admm_core(req, opts, req.newton_t);
    } catch (const NegativeCurvature&) {
        if (req.newton_t == 0.0) throw;
        auto [v, diag] = admm_core(req, opts, 0.0);
        diag.fell_back_first_order = true;
        return {std::move(v), std::move(diag)};
    }
}

VectorField p_direction(int p, const DirectionRequest& req) {
    validate_request(req);
    if (p != 2 && p != 4)
        throw ContractViolation("p_direction supports p in {2, 4}");
    const Mesh& mesh = *req.mesh;
    const VectorSpace space(mesh);
    const Eigen::VectorXd grad = space.restrict(*req.grad);
    Eigen::VectorXd area_row;
    const Eigen::VectorXd* area_ptr = nullptr;
    if (req.area_constrained) {
        area_row = space.restrict(area_constraint_covector(mesh));
        area_ptr = &area_row;
    }

    VectorField v2 = p2_direction_raw(space, grad, area_ptr);
    if (p == 2) {
        const double s = sup_seminorm(mesh, v2);
        if (s <= 0.0) throw DirectionError("p = 2 direction vanished");
        for (double& c : v2.xy) c /= s;
        return v2;
    }

    // p = 4: damped Newton on the monotone quartic system.
    const int n = space.n();
    Eigen::VectorXd x = space.restrict(v2);
    {
        // Optimal scale of the warm start along its ray.
        std::vector<Mat2> dv = element_jacobians(space, v2);
        double quart = 0.0;
        for (int e = 0; e < mesh.n_triangles(); ++e)
            quart += space.geom[e].area * dv[e].frobenius2() * dv[e].frobenius2();
        const double slope = grad.dot(x);
        if (quart > 0.0 && slope < 0.0) x *= std::cbrt(-slope / quart);
    }
    double mult = 0.0;  // area multiplier

    const auto kkt_residual = [&](const Eigen::VectorXd& y,
                                  double m) -> Eigen::VectorXd {
        const VectorField vy = space.expand(y);
        std::vector<Mat2> coef = element_jacobians(space, vy);
        for (Mat2& dv : coef) dv = dv.frobenius2() * dv;
        Eigen::VectorXd r = grad + space.matrix_pairing(coef);
        if (area_ptr != nullptr) r += m * area_row;
        return r;
    };
    const auto full_residual_norm = [&](const Eigen::VectorXd& y, double m) {
        double rn = kkt_residual(y, m).squaredNorm();
        if (area_ptr != nullptr) {
            const double cv = area_row.dot(y);
            rn += cv * cv;
        }
        return std::sqrt(rn);
    };

    const double tol = 1e-9 * std::max(1.0, grad.norm());
    double res = full_residual_norm(x, mult);
    for (int newton_it = 0; newton_it < 100 && res > tol; ++newton_it) {
        // Assemble the Jacobian of the quartic term at x.
        const VectorField vx = space.expand(x);
        const std::vector<Mat2> dvs = element_jacobians(space, vx);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(36 * mesh.n_triangles());
        for (int e = 0; e < mesh.n_triangles(); ++e) {
            const TriGeometry& g = space.geom[e];
            const Mat2& dv = dvs[e];
            const double f2 = dv.frobenius2();
            for (int a = 0; a < 3; ++a) {
                const int fa = space.vertex_to_free[mesh.triangles[e][a]];
                if (fa < 0) continue;
                for (int b = 0; b < 3; ++b) {
                    const int fb = space.vertex_to_free[mesh.triangles[e][b]];
                    if (fb < 0) continue;
                    const double gg = g.grad[a].dot(g.grad[b]);
                    for (int c = 0; c < 2; ++c) {
                        const double dva =
                            dv(c, 0) * g.grad[a].x + dv(c, 1) * g.grad[a].y;
                        for (int d = 0; d < 2; ++d) {
                            const double dvb =
                                dv(d, 0) * g.grad[b].x + dv(d, 1) * g.grad[b].y;
                            double val = 2.0 * dva * dvb;
                            if (c == d) val += f2 * gg;
                            trip.emplace_back(2 * fa + c, 2 * fb + d, g.area * val);
                        }
                    }
                }
            }
        }
        Eigen::SparseMatrix<double> h(n, n);
        h.setFromTriplets(trip.begin(), trip.end());

        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> hldlt;
        double shift = 0.0;
        for (int attempt = 0; attempt < 8; ++attempt) {
            hldlt.compute(shift == 0.0
                              ? h
                              : Eigen::SparseMatrix<double>(h + shift * space.gram));
            if (hldlt.info() == Eigen::Success) break;
            shift = (shift == 0.0) ? 1e-10 : shift * 100.0;
        }
        if (hldlt.info() != Eigen::Success)
            throw DirectionError("p = 4 Newton matrix factorisation failed");

        const Eigen::VectorXd r = kkt_residual(x, mult);
        Eigen::VectorXd dx;
        double dm = 0.0;
        if (area_ptr == nullptr) {
            dx = hldlt.solve(-r);
        } else {
            const Eigen::VectorXd h1 = hldlt.solve(r);
            const Eigen::VectorXd h2 = hldlt.solve(area_row);
            dm = (area_row.dot(x) - area_row.dot(h1)) / area_row.dot(h2);
            dx = -h1 - dm * h2;
        }

        double alpha = 1.0;
        bool accepted = false;
        for (; alpha > 1e-12; alpha *= 0.5) {
            if (full_residual_norm(x + alpha * dx, mult + alpha * dm) < res) {
                accepted = true;
                break;
            }
        }
        if (!accepted) throw DirectionError("p = 4 Newton stagnation");
        x += alpha * dx;
        mult += alpha * dm;
        res = full_residual_norm(x, mult);
    }
    if (res > tol) throw DirectionError("p = 4 Newton did not reach tolerance");

    VectorField v = space.expand(x);
    const double s = sup_seminorm(mesh, v);
    if (s <= 0.0) throw DirectionError("p = 4 direction vanished");
    for (double& c : v.xy) c /= s;
    return v;
}

}  // namespace shapeopt
