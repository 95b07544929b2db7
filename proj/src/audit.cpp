#include "shapeopt/audit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "shapeopt/descent.hpp"
#include "shapeopt/errors.hpp"

namespace shapeopt {

double transported_energy(const ProblemSpec& problem, const Mesh& mesh,
                          const VectorField& v, double eps,
                          const QuadratureRule& rule) {
    auto [moved, report] = deform(mesh, v, eps);
    if (!report.valid)
        throw ContractViolation("transported_energy: deformation inverted the mesh");
    const State state = solve_state(problem, moved);
    return energy(problem, moved, state, rule);
}

VectorField random_interior_field(const Mesh& mesh, std::mt19937& rng,
                                  double sup_seminorm) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    VectorField v(mesh.n_vertices());
    for (int i = 0; i < mesh.n_vertices(); ++i) {
        if (mesh.on_dirichlet_D[i]) continue;
        v.set(i, {gauss(rng), gauss(rng)});
    }
    const double s = max_spectral_jacobian(mesh, v);
    if (s > 0.0)
        for (double& c : v.xy) c *= sup_seminorm / s;
    return v;
}

namespace {

/// Least-squares slope of log10(err) against log10(eps), skipping points that
/// sit at the rounding floor of the divided difference.
double observed_order(const std::vector<double>& eps, const std::vector<double>& err,
                      double scale, int* used = nullptr) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double floor_i = 1e-13 * scale / eps[i];
        if (err[i] <= 10.0 * floor_i) continue;
        lx.push_back(std::log10(eps[i]));
        ly.push_back(std::log10(err[i]));
    }
    if (used != nullptr) *used = static_cast<int>(lx.size());
    if (lx.size() < 2) return std::numeric_limits<double>::infinity();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= lx.size();
    my /= ly.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxy / sxx;
}

struct Setup {
    Mesh mesh;
    State state;
    Adjoint adjoint;
};

Setup make_setup(const Experiment& exp, int n) {
    Setup s{exp.initial_mesh.build(n), {}, {}};
    s.state = solve_state(exp.problem, s.mesh);
    s.adjoint = solve_adjoint(exp.problem, s.mesh, s.state);
    return s;
}

}  // namespace

AuditResult derivative_fd_audit(const Experiment& exp, int n, unsigned seed) {
    AuditResult out;
    out.name = exp.name + ".derivative_fd";
    const Setup s = make_setup(exp, n);
    const DualVector grad = first_derivative(exp.problem, s.mesh, s.state, s.adjoint);
    std::mt19937 rng(seed);
    const VectorField v = random_interior_field(s.mesh, rng, 0.9);
    const double pairing = grad.pair(v);
    const QuadratureRule& rule = QuadratureRule::order4();
    const double e0 = transported_energy(exp.problem, s.mesh, v, 0.0, rule);

    const std::vector<double> eps{1e-2, 1e-3, 1e-4, 1e-5};
    std::vector<double> err;
    for (double e : eps) {
        const double dplus = transported_energy(exp.problem, s.mesh, v, e, rule);
        const double dminus = transported_energy(exp.problem, s.mesh, v, -e, rule);
        err.push_back(std::abs((dplus - dminus) / (2.0 * e) - pairing));
    }
    const double scale = std::max({1.0, std::abs(e0), std::abs(pairing)});
    if (*std::max_element(err.begin(), err.end()) <= 1e-9 * scale) {
        out.pass = true;
        out.measure = std::numeric_limits<double>::infinity();
        out.detail = "differences at rounding level for every eps";
        return out;
    }
    int used = 0;
    const double order = observed_order(eps, err, scale, &used);
    out.measure = order;
    out.pass = order >= 1.9;
    std::ostringstream ss;
    ss << "order " << order << " from " << used << " points, err(1e-2) = " << err[0];
    out.detail = ss.str();
    return out;
}

AuditResult hessian_symmetry_audit(const Experiment& exp, int n, int pairs,
                                   unsigned seed) {
    AuditResult out;
    out.name = exp.name + ".hessian_symmetry";
    const Setup s = make_setup(exp, n);
    const HessianOperator hess(exp.problem, s.mesh, s.state, s.adjoint);
    std::mt19937 rng(seed);
    double worst = 0.0;
    for (int i = 0; i < pairs; ++i) {
        const VectorField v = random_interior_field(s.mesh, rng, 1.0);
        const VectorField w = random_interior_field(s.mesh, rng, 1.0);
        const double vw = hess.bilin(v, w);
        const double wv = hess.bilin(w, v);
        const double denom =
            std::abs(hess.bilin(v, v)) + std::abs(hess.bilin(w, w)) + 1e-300;
        worst = std::max(worst, std::abs(vw - wv) / denom);
    }
    out.measure = worst;
    out.pass = worst <= 1e-8;
    std::ostringstream ss;
    ss << "worst relative asymmetry " << worst << " over " << pairs << " pairs";
    out.detail = ss.str();
    return out;
}

AuditResult hessian_taylor_audit(const Experiment& exp, int n, unsigned seed) {
    AuditResult out;
    out.name = exp.name + ".hessian_taylor";
    const Setup s = make_setup(exp, n);
    const DualVector grad = first_derivative(exp.problem, s.mesh, s.state, s.adjoint);
    const HessianOperator hess(exp.problem, s.mesh, s.state, s.adjoint);
    std::mt19937 rng(seed);
    const VectorField v = random_interior_field(s.mesh, rng, 0.9);
    const double slope = grad.pair(v);
    const double curvature = hess.bilin(v, v);
    const QuadratureRule& rule = QuadratureRule::order4();
    const double e0 = transported_energy(exp.problem, s.mesh, v, 0.0, rule);

    const std::vector<double> ts{4e-2, 2e-2, 1e-2, 5e-3};
    std::vector<double> rem;
    for (double t : ts) {
        const double et = transported_energy(exp.problem, s.mesh, v, t, rule);
        rem.push_back(std::abs(et - e0 - t * slope - 0.5 * t * t * curvature));
    }
    const double scale = std::max(1.0, std::abs(e0));
    if (*std::max_element(rem.begin(), rem.end()) <= 1e-10 * scale) {
        out.pass = true;
        out.measure = std::numeric_limits<double>::infinity();
        out.detail = "remainder at rounding level for every t";
        return out;
    }
    int used = 0;
    const double order = observed_order(ts, rem, scale, &used);
    out.measure = order;
    out.pass = order >= 2.9;
    std::ostringstream ss;
    ss << "order " << order << " from " << used << " points, rem(4e-2) = " << rem[0];
    out.detail = ss.str();
    return out;
}

AuditResult integrand_fd_audit(const Experiment& exp, int points, unsigned seed) {
    AuditResult out;
    out.name = exp.name + ".integrand_fd";
    const ProblemSpec& p = exp.problem;
    if (!p.integrand && !p.source) {
        out.pass = true;
        out.detail = "no pointwise data to audit";
        return out;
    }
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> in_box(-1.9, 1.9);
    std::uniform_real_distribution<double> in_y(-1.0, 1.0);
    const double h = 1e-4;
    double worst = 0.0;
    double scale = 1.0;  // local magnitude of the data family at the sample point
    auto update = [&](double got, double fd) {
        const double rel = std::abs(got - fd) / std::max(scale, std::abs(fd));
        worst = std::max(worst, rel);
    };
    int checked = 0;
    while (checked < points) {
        const Vec2 x{in_box(rng), in_box(rng)};
        if (!p.smooth_at(x)) continue;
        ++checked;
        const double y = in_y(rng);
        const Vec2 ex{h, 0.0}, ey{0.0, h};
        scale = 1.0;
        if (p.integrand) {
            const Integrand& jj = *p.integrand;
            scale += std::abs(jj.j(x, y)) + jj.j_x(x, y).norm() +
                     std::abs(jj.j_y(x, y)) + std::abs(jj.j_yy(x, y)) +
                     jj.j_yx(x, y).norm() + jj.j_xx(x, y).frobenius();
        }
        if (p.source) {
            const SourceData& src = *p.source;
            scale += std::abs(src.F(x)) + src.grad_F(x).norm() +
                     src.hess_F(x).frobenius();
        }
        if (p.integrand) {
            const Integrand& jj = *p.integrand;
            update(jj.j_x(x, y).x, (jj.j(x + ex, y) - jj.j(x - ex, y)) / (2 * h));
            update(jj.j_x(x, y).y, (jj.j(x + ey, y) - jj.j(x - ey, y)) / (2 * h));
            update(jj.j_y(x, y), (jj.j(x, y + h) - jj.j(x, y - h)) / (2 * h));
            update(jj.j_yy(x, y), (jj.j_y(x, y + h) - jj.j_y(x, y - h)) / (2 * h));
            update(jj.j_yx(x, y).x, (jj.j_x(x, y + h).x - jj.j_x(x, y - h).x) / (2 * h));
            update(jj.j_yx(x, y).y, (jj.j_x(x, y + h).y - jj.j_x(x, y - h).y) / (2 * h));
            const Mat2 jxx = jj.j_xx(x, y);
            update(jxx(0, 0), (jj.j_x(x + ex, y).x - jj.j_x(x - ex, y).x) / (2 * h));
            update(jxx(0, 1), (jj.j_x(x + ey, y).x - jj.j_x(x - ey, y).x) / (2 * h));
            update(jxx(1, 0), (jj.j_x(x + ex, y).y - jj.j_x(x - ex, y).y) / (2 * h));
            update(jxx(1, 1), (jj.j_x(x + ey, y).y - jj.j_x(x - ey, y).y) / (2 * h));
        }
        if (p.source) {
            const SourceData& src = *p.source;
            update(src.grad_F(x).x, (src.F(x + ex) - src.F(x - ex)) / (2 * h));
            update(src.grad_F(x).y, (src.F(x + ey) - src.F(x - ey)) / (2 * h));
            const Mat2 hf = src.hess_F(x);
            update(hf(0, 0), (src.grad_F(x + ex).x - src.grad_F(x - ex).x) / (2 * h));
            update(hf(0, 1), (src.grad_F(x + ey).x - src.grad_F(x - ey).x) / (2 * h));
            update(hf(1, 0), (src.grad_F(x + ex).y - src.grad_F(x - ex).y) / (2 * h));
            update(hf(1, 1), (src.grad_F(x + ey).y - src.grad_F(x - ey).y) / (2 * h));
        }
    }
    out.measure = worst;
    out.pass = worst <= 1e-5;
    std::ostringstream ss;
    ss << "worst relative deviation " << worst << " over " << points << " points";
    out.detail = ss.str();
    return out;
}

std::vector<AuditResult> run_all_audits(const Experiment& exp, int n) {
    std::vector<AuditResult> out;
    out.push_back(integrand_fd_audit(exp, 100));
    out.push_back(derivative_fd_audit(exp, n));
    out.push_back(hessian_symmetry_audit(exp, n, 20));
    out.push_back(hessian_taylor_audit(exp, n));
    return out;
}

}  // namespace shapeopt
