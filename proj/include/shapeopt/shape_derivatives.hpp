#pragma once

#include <Eigen/SparseLU>
#include <memory>
#include <vector>

#include "shapeopt/fem.hpp"
#include "shapeopt/problems.hpp"

namespace shapeopt {

/// Covector on the vector-field degrees of freedom (two per hold-all vertex,
/// zero at the hold-all boundary). Pairing with a field is the dot product.
struct DualVector {
    std::vector<double> values;

    DualVector() = default;
    explicit DualVector(std::size_t n_vertices) : values(2 * n_vertices, 0.0) {}
    double pair(const VectorField& v) const;
    double norm() const;
    DualVector& operator+=(const DualVector& o);
    DualVector& operator*=(double s);
};

/// calA[V] = I div V - DV - DV^T, evaluated from an element-constant Jacobian.
Mat2 first_expansion(const Mat2& dv);

struct MatrixForms {
    Mat2 calA;      // first_expansion(DV)
    double Dbrack;  // div V div W - tr(DV DW)
    Mat2 Abrack;    // second-order expansion of the pulled-back form
};

MatrixForms matrix_forms(const Mat2& dv, const Mat2& dw);

/// Assembled discrete first shape derivative (the per-kind expanded formulas).
DualVector first_derivative(const ProblemSpec& problem, const Mesh& mesh,
                            const State& state, const Adjoint& adjoint);

/// The Lagrangian pieces J_V and <p, e_V(0, y)[.]> as separate covectors; an
/// independent route to first_derivative = assemble_JV + assemble_eV(adjoint).
DualVector assemble_JV(const ProblemSpec& problem, const Mesh& mesh, const State& state);
DualVector assemble_eV(const ProblemSpec& problem, const Mesh& mesh, const State& state,
                       const Adjoint& multiplier);

/// Discrete material derivative of the state in direction V.
struct StatePerturbation {
    ProblemKind kind = ProblemKind::NoPde;
    ScalarField dy1;
    ScalarField dy2;
    double dlambda = 0.0;
};

/// Abstract symmetric bilinear form on vector fields, applied matrix-free.
struct BilinearOperator {
    virtual ~BilinearOperator() = default;
    virtual DualVector apply(const VectorField& v) const = 0;
    virtual double bilin(const VectorField& v, const VectorField& w) const;
};

/// Matrix-free second shape derivative. apply(V) performs one sensitivity
/// solve and one second-adjoint solve against factorisations cached at
/// construction, then assembles h2 + h3.
class HessianOperator : public BilinearOperator {
  public:
    HessianOperator(const ProblemSpec& problem, const Mesh& mesh, const State& state,
                    const Adjoint& adjoint);
    HessianOperator(HessianOperator&&) noexcept;
    HessianOperator& operator=(HessianOperator&&) noexcept;
    ~HessianOperator() override;

    DualVector apply(const VectorField& v) const override;
    StatePerturbation sensitivity(const VectorField& v) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One-shot sensitivity solve (builds its own factorisation).
StatePerturbation sensitivity(const ProblemSpec& problem, const Mesh& mesh,
                              const State& state, const VectorField& v);

HessianOperator hessian(const ProblemSpec& problem, const Mesh& mesh,
                        const State& state, const Adjoint& adjoint);

}  // namespace shapeopt
