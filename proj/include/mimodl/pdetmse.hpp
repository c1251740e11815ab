// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mimodl/channel.hpp"
#include "mimodl/config.hpp"
#include "mimodl/design.hpp"
#include "mimodl/mse.hpp"
#include "mimodl/rng.hpp"

namespace mimodl {

// The joint problem is optimized over the scaled precoder G = U sqrt(P)
// (columns g_kj = u_kj sqrt(p_kj)); the objective depends on G_k G_k^H only
// and the power budget becomes the trace ball ||G||_F^2 <= P_max, which
// removes the unit-norm column constraints.

/// Sum over users of log det E_k^DL as a function of G, computed through the
/// covariance route log det R_{N+I,k} - log det J_k.
template <class Real>
Real pdetmse_objective_g(const ChannelSet<Real>& ch, const MatC<Real>& g,
                         const std::vector<int>& streams, Real noise_var) {
    Real f = Real(0);
    int off = 0;
    for (std::size_t k = 0; k < streams.size(); ++k) {
        const MatC<Real>& hk = ch.per_user[static_cast<int>(k)];
        const int nk = static_cast<int>(hk.cols());
        const MatC<Real> x = hk.adjoint() * g;  // N_k x L
        MatC<Real> jk = x * x.adjoint();
        jk += noise_var * MatC<Real>::Identity(nk, nk);
        const MatC<Real> xk = x.middleCols(off, streams[k]);
        MatC<Real> rk = jk - xk * xk.adjoint();
        f += logdet_hpd(hermitianize(rk)) - logdet_hpd(hermitianize(jk));
        off += streams[k];
    }
    return f;
}

/// Gradient of pdetmse_objective_g with respect to the real and imaginary
/// parts of G, packed as the complex matrix 2 * df/dG*. The directional
/// derivative along a complex step D is Re tr(grad^H D).
template <class Real>
MatC<Real> pdetmse_gradient_g(const ChannelSet<Real>& ch, const MatC<Real>& g,
                              const std::vector<int>& streams, Real noise_var) {
    const int m = static_cast<int>(g.rows());
    const int nusers = static_cast<int>(streams.size());
    MatC<Real> sum_j = MatC<Real>::Zero(m, m);   // sum_k H_k J_k^{-1} H_k^H
    std::vector<MatC<Real>> t(nusers);           // H_k R_k^{-1} H_k^H
    MatC<Real> sum_t = MatC<Real>::Zero(m, m);
    int off = 0;
    for (int k = 0; k < nusers; ++k) {
        const MatC<Real>& hk = ch.per_user[k];
        const int nk = static_cast<int>(hk.cols());
        const MatC<Real> x = hk.adjoint() * g;
        MatC<Real> jk = x * x.adjoint();
        jk += noise_var * MatC<Real>::Identity(nk, nk);
        const MatC<Real> xk = x.middleCols(off, streams[k]);
        MatC<Real> rk = hermitianize(MatC<Real>(jk - xk * xk.adjoint()));
        sum_j += hk * solve_hpd(hermitianize(jk), MatC<Real>(hk.adjoint()));
        t[k] = hk * solve_hpd(rk, MatC<Real>(hk.adjoint()));
        sum_t += t[k];
        off += streams[k];
    }
    MatC<Real> grad(m, g.cols());
    off = 0;
    for (int k = 0; k < nusers; ++k) {
        grad.middleCols(off, streams[k]) =
            Real(2) * (sum_t - t[k] - sum_j) * g.middleCols(off, streams[k]);
        off += streams[k];
    }
    return grad;
}

/// Max relative deviation between the analytic gradient and central finite
/// differences over every real coordinate of G.
template <class Real>
Real numeric_gradient_check(const MatC<Real>& g, const ChannelSet<Real>& ch,
                            const std::vector<int>& streams, Real noise_var,
                            Real h = Real(1e-6)) {
    const MatC<Real> grad = pdetmse_gradient_g(ch, g, streams, noise_var);
    Real worst = Real(0);
    for (int c = 0; c < g.cols(); ++c) {
        for (int r = 0; r < g.rows(); ++r) {
            for (int part = 0; part < 2; ++part) {
                const Cplx<Real> delta =
                    part == 0 ? Cplx<Real>(h, 0) : Cplx<Real>(0, h);
                MatC<Real> plus = g, minus = g;
                plus(r, c) += delta;
                minus(r, c) -= delta;
                const Real fd = (pdetmse_objective_g(ch, plus, streams, noise_var) -
                                 pdetmse_objective_g(ch, minus, streams, noise_var)) /
                                (2 * h);
                const Real an = part == 0 ? std::real(grad(r, c))
                                          : std::imag(grad(r, c));
                worst = std::max(worst,
                                 std::abs(an - fd) / (Real(1) + std::abs(fd)));
            }
        }
    }
    return worst;
}

template <class Real>
struct PdetmseSolution {
    DesignState<Real> state;
    Real objective = Real(0);  // equals minus the sum rate in nats
    int iterations = 0;        // of the winning start
    bool converged = false;
};

/// Joint PDetMSE minimization by projected gradient descent on the trace
/// ball, best of n_starts random initializations plus an optional caller
/// warm start (descent can only improve on it). Desk-scale reference solver:
/// monotone within each start, gradient validated by finite differences.
template <class Real>
PdetmseSolution<Real> pdetmse_solve(const SystemConfig<Real>& cfg,
                                    const ChannelSet<Real>& ch, RngStream id,
                                    int n_starts = 4,
                                    const MatC<Real>* warm_start = nullptr) {
    if (auto err = validate_config(cfg)) throw std::invalid_argument(*err);
    const int m = cfg.tx_antennas;
    const int total = cfg.total_streams();
    const Real p_max = cfg.power_budget;

    auto project = [&](MatC<Real> g) {
        const Real n2 = g.squaredNorm();
        if (n2 > p_max) g *= std::sqrt(p_max / n2);
        return g;
    };

    MatC<Real> best_g;
    Real best_f = std::numeric_limits<Real>::infinity();
    int best_iters = 0;
    bool best_conv = false;
    const int random_starts = std::max(1, n_starts);
    const int total_starts = random_starts + (warm_start ? 1 : 0);
    for (int s = 0; s < total_starts; ++s) {
        MatC<Real> g;
        if (s == random_starts) {
            g = project(*warm_start);
        } else {
            StreamRng rng(id.substream(static_cast<uint64_t>(s)));
            g.resize(m, total);
            for (int c = 0; c < total; ++c)
                for (int r = 0; r < m; ++r)
                    g(r, c) = static_cast<Cplx<Real>>(rng.complex_normal());
            g = project(g * std::sqrt(p_max / g.squaredNorm()));
        }

        Real f = pdetmse_objective_g(ch, g, cfg.streams, cfg.noise_var);
        Real step = Real(0);
        bool converged = false;
        int iters = 0;
        int stalled = 0;
        for (int iter = 0; iter < 20000; ++iter) {
            iters = iter + 1;
            const MatC<Real> grad =
                pdetmse_gradient_g(ch, g, cfg.streams, cfg.noise_var);
            if (step == Real(0))
                step = Real(0.25) * std::sqrt(p_max) / (grad.norm() + Real(1e-300));
            bool moved = false;
            for (Real alpha = step; alpha > Real(1e-20); alpha *= Real(0.5)) {
                MatC<Real> cand = project(g - alpha * grad);
                Real fc;
                try {
                    fc = pdetmse_objective_g(ch, cand, cfg.streams, cfg.noise_var);
                } catch (const std::exception&) {
                    continue;
                }
                const Real slope =
                    (grad.conjugate().cwiseProduct(cand - g)).real().sum();
                if (fc <= f + Real(1e-4) * slope && fc < f) {
                    const Real drop = f - fc;
                    g = std::move(cand);
                    f = fc;
                    step = alpha * 2;
                    moved = true;
                    stalled = drop < Real(1e-12) * std::max(Real(1), std::abs(f))
                                  ? stalled + 1
                                  : 0;
                    break;
                }
            }
            if (!moved || stalled >= 3) {
                converged = true;  // stationary to line-search resolution
                break;
            }
        }
        if (f < best_f) {
            best_f = f;
            best_g = g;
            best_iters = iters;
            best_conv = converged;
        }
    }

    PdetmseSolution<Real> out;
    out.objective = best_f;
    out.iterations = best_iters;
    out.converged = best_conv;
    auto& st = out.state;
    st.streams = cfg.streams;
    st.tx.resize(m, total);
    st.dl_power.resize(total);
    for (int c = 0; c < total; ++c) {
        const Real norm = best_g.col(c).norm();
        st.dl_power[c] = norm * norm;
        if (norm > Real(1e-150)) {
            st.tx.col(c) = best_g.col(c) / norm;
        } else {
            st.tx.col(c).setZero();
            st.tx.col(c)[0] = Real(1);
            st.dl_power[c] = Real(0);
        }
    }
    st.ul_power = st.dl_power;
    st.rx.resize(cfg.num_users);
    for (int k = 0; k < cfg.num_users; ++k) {
        MatC<Real> vk = mmse_downlink_decoder(k, ch, st.tx, st.dl_power,
                                              cfg.streams, cfg.noise_var);
        for (int c = 0; c < vk.cols(); ++c) {
            const Real n = vk.col(c).norm();
            if (n > Real(1e-150))
                vk.col(c) /= n;
            else
                vk.col(c) = VecC<Real>::Unit(vk.rows(), 0);
        }
        st.rx[k] = std::move(vk);
    }
    return out;
}

}  // namespace mimodl
