// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mimodl/channel.hpp"
#include "mimodl/linalg.hpp"
#include "mimodl/types.hpp"

namespace mimodl {

/// Result of the broadcast-channel sum-capacity computation via the dual MAC.
template <class Real>
struct DpcResult {
    Real rate = Real(0);  // nats
    std::vector<MatC<Real>> covariances;
    int iterations = 0;
    Real kkt_spread = Real(0);  // relative spread of active water levels
    bool converged = false;
};

namespace detail {

// Project per-user Hermitian blocks onto {Sigma_k >= 0, sum_k tr(Sigma_k) <= p}:
// eigenvalue clipping plus a joint water-shift on all eigenvalues.
template <class Real>
void project_covariances(std::vector<MatC<Real>>& sigma, Real p_max) {
    std::vector<Eigen::SelfAdjointEigenSolver<MatC<Real>>> eig;
    eig.reserve(sigma.size());
    int total = 0;
    for (auto& s : sigma) {
        eig.emplace_back(hermitianize(s));
        total += static_cast<int>(s.rows());
    }
    VecR<Real> values(total);
    int off = 0;
    for (const auto& e : eig) {
        values.segment(off, e.eigenvalues().size()) = e.eigenvalues();
        off += static_cast<int>(e.eigenvalues().size());
    }
    values = project_simplex_cap(std::move(values), p_max);
    off = 0;
    for (std::size_t k = 0; k < sigma.size(); ++k) {
        const auto& e = eig[k];
        const int nk = static_cast<int>(e.eigenvalues().size());
        sigma[k] = e.eigenvectors() *
                   values.segment(off, nk).template cast<Cplx<Real>>().asDiagonal() *
                   e.eigenvectors().adjoint();
        sigma[k] = hermitianize(sigma[k]);
        off += nk;
    }
}

}  // namespace detail

/// BC sum capacity through the dual MAC: maximize
/// log det(I + sigma2^{-1} sum_k H_k Sigma_k H_k^H) over PSD covariances with
/// a sum-trace budget. The problem is concave; projected gradient ascent with
/// backtracking reaches the global optimum, certified by the KKT condition
/// that all active eigenmodes see a common water level.
template <class Real>
DpcResult<Real> dpc_sum_capacity(const ChannelSet<Real>& ch, Real p_max,
                                 Real noise_var, int max_iters = 20000,
                                 Real kkt_tol = Real(1e-6)) {
    const int nusers = ch.num_users();
    const int m = static_cast<int>(ch.stacked.rows());
    DpcResult<Real> out;
    out.covariances.resize(nusers);
    if (p_max <= Real(0)) {
        for (int k = 0; k < nusers; ++k) {
            const int nk = static_cast<int>(ch.per_user[k].cols());
            out.covariances[k] = MatC<Real>::Zero(nk, nk);
        }
        out.converged = true;
        return out;
    }

    int total_rx = 0;
    for (int k = 0; k < nusers; ++k) total_rx += static_cast<int>(ch.per_user[k].cols());
    for (int k = 0; k < nusers; ++k) {
        const int nk = static_cast<int>(ch.per_user[k].cols());
        out.covariances[k] =
            MatC<Real>::Identity(nk, nk) * (p_max / Real(total_rx));
    }

    auto received = [&](const std::vector<MatC<Real>>& sigma) {
        MatC<Real> a = MatC<Real>::Identity(m, m);
        for (int k = 0; k < nusers; ++k)
            a += (ch.per_user[k] * sigma[k] * ch.per_user[k].adjoint()) / noise_var;
        return hermitianize(a);
    };
    auto objective = [&](const std::vector<MatC<Real>>& sigma) {
        return logdet_hpd(received(sigma));
    };

    Real f = objective(out.covariances);
    Real step = p_max;
    for (int iter = 0; iter < max_iters; ++iter) {
        out.iterations = iter + 1;
        const MatC<Real> a = received(out.covariances);
        const MatC<Real> ainv_scaled =
            solve_hpd(a, MatC<Real>::Identity(m, m)) / noise_var;
        std::vector<MatC<Real>> grad(nusers);
        for (int k = 0; k < nusers; ++k)
            grad[k] = hermitianize(
                MatC<Real>(ch.per_user[k].adjoint() * ainv_scaled * ch.per_user[k]));

        // KKT certificate: common water level across all active eigenmodes,
        // no inactive direction above it.
        Real lo = std::numeric_limits<Real>::infinity();
        Real hi = Real(0);
        Real inactive_hi = Real(0);
        for (int k = 0; k < nusers; ++k) {
            Eigen::SelfAdjointEigenSolver<MatC<Real>> es(out.covariances[k]);
            for (int i = 0; i < es.eigenvalues().size(); ++i) {
                const VecC<Real> v = es.eigenvectors().col(i);
                const Real level = std::real(v.dot(grad[k] * v));
                if (es.eigenvalues()[i] > Real(1e-9) * p_max) {
                    lo = std::min(lo, level);
                    hi = std::max(hi, level);
                } else {
                    inactive_hi = std::max(inactive_hi, level);
                }
            }
        }
        if (hi > Real(0) && (hi - lo) / hi < kkt_tol &&
            inactive_hi <= hi * (Real(1) + kkt_tol)) {
            out.kkt_spread = (hi - lo) / hi;
            out.converged = true;
            break;
        }
        out.kkt_spread = hi > Real(0) ? (hi - lo) / hi : Real(0);

        bool moved = false;
        for (Real alpha = step; alpha > Real(1e-16) * p_max; alpha *= Real(0.5)) {
            std::vector<MatC<Real>> cand = out.covariances;
            for (int k = 0; k < nusers; ++k) cand[k] += alpha * grad[k];
            detail::project_covariances(cand, p_max);
            Real fc;
            try {
                fc = objective(cand);
            } catch (const std::exception&) {
                continue;
            }
            if (fc > f) {
                out.covariances = std::move(cand);
                f = fc;
                step = alpha * 2;
                moved = true;
                break;
            }
        }
        if (!moved) break;  // stationary to line-search resolution
    }
    out.rate = f;
    return out;
}

}  // namespace mimodl
