// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>

#include "mimodl/types.hpp"

namespace mimodl {

/// (A + A^H)/2. Call after accumulating Hermitian sums so rounding drift
/// cannot leak into a factorization.
template <class Real>
MatC<Real> hermitianize(const MatC<Real>& a) {
    return ((a + a.adjoint()) * Real(0.5)).eval();
}

/// log det of a Hermitian positive-definite matrix via Cholesky.
/// Throws if the factorization fails (matrix not PD to machine precision).
template <class Real>
Real logdet_hpd(const MatC<Real>& a) {
    Eigen::LLT<MatC<Real>> llt(a);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("logdet_hpd: matrix not positive definite");
    return Real(2) * llt.matrixLLT().diagonal().real().array().log().sum();
}

/// Solve A X = B for Hermitian positive-definite A.
template <class Real, class Derived>
auto solve_hpd(const MatC<Real>& a, const Eigen::MatrixBase<Derived>& b) {
    Eigen::LLT<MatC<Real>> llt(a);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("solve_hpd: matrix not positive definite");
    return llt.solve(b).eval();
}

/// Euclidean projection of v onto {x >= 0, sum(x) <= budget}.
template <class Real>
VecR<Real> project_simplex_cap(VecR<Real> v, Real budget) {
    VecR<Real> clipped = v.cwiseMax(Real(0));
    if (clipped.sum() <= budget) return clipped;
    // Water-shift: x_i = max(0, v_i - theta) with sum(x) == budget.
    VecR<Real> sorted = v;
    std::sort(sorted.data(), sorted.data() + sorted.size(),
              [](Real a, Real b) { return a > b; });
    Real cumsum = Real(0);
    Real theta = Real(0);
    for (int i = 0; i < sorted.size(); ++i) {
        cumsum += sorted[i];
        const Real t = (cumsum - budget) / Real(i + 1);
        if (i + 1 == sorted.size() || sorted[i + 1] <= t) {
            theta = t;
            break;
        }
    }
    return (v.array() - theta).cwiseMax(Real(0)).matrix();
}

}  // namespace mimodl
