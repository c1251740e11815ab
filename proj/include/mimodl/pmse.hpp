// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "mimodl/channel.hpp"
#include "mimodl/config.hpp"
#include "mimodl/design.hpp"
#include "mimodl/duality.hpp"
#include "mimodl/mse.hpp"
#include "mimodl/rng.hpp"

namespace mimodl {

/// Product of the per-stream uplink MSEs under MMSE reception, as a function
/// of the uplink precoders V and powers q only.
template <class Real>
Real pmse_uplink_objective(const ChannelSet<Real>& ch,
                           const std::vector<MatC<Real>>& rx,
                           const VecR<Real>& q, Real noise_var) {
    const MatC<Real> heff = effective_uplink_channel(ch, rx);
    const int m = static_cast<int>(heff.rows());
    MatC<Real> j = heff * q.asDiagonal() * heff.adjoint();
    j += noise_var * MatC<Real>::Identity(m, m);
    const MatC<Real> x = solve_hpd(hermitianize(j), heff);
    Real prod = Real(1);
    for (int i = 0; i < heff.cols(); ++i)
        prod *= Real(1) - q[i] * std::real(heff.col(i).dot(x.col(i)));
    return prod;
}

/// Product of the per-stream downlink MSEs 1/(1 + gamma^DL) for the current
/// precoder, decoder directions, and downlink powers.
template <class Real>
Real pmse_downlink_objective(const ChannelSet<Real>& ch,
                             const DesignState<Real>& state, Real noise_var) {
    const VecR<Real> sinr =
        all_downlink_sinrs(ch, state.tx, state.rx, state.dl_power, noise_var);
    Real prod = Real(1);
    for (int i = 0; i < sinr.size(); ++i) prod /= Real(1) + sinr[i];
    return prod;
}

/// Result of the virtual-uplink power subproblem.
template <class Real>
struct PowerAllocation {
    VecR<Real> q;
    bool warning = false;  // numerical failure; incumbent returned
    int iterations = 0;
};

/// Minimizes sum_i log eps_i(q) over {q >= 0, ||q||_1 <= p_max} by projected
/// descent with central-difference gradients and a backtracking line search.
/// Monotone: the returned point never has a worse objective than q_start.
/// Powers below 1e-12 * p_max are snapped to exact zero on exit (implicit
/// stream selection); a dead stream only comes back if lifting it off the
/// boundary strictly improves the objective.
template <class Real>
PowerAllocation<Real> uplink_power_allocation(const ChannelSet<Real>& ch,
                                              const std::vector<MatC<Real>>& rx,
                                              Real p_max, Real noise_var,
                                              const VecR<Real>& q_start,
                                              int max_inner = 200) {
    const MatC<Real> heff = effective_uplink_channel(ch, rx);
    const int total = static_cast<int>(heff.cols());
    const int m = static_cast<int>(heff.rows());
    const Real freeze = Real(1e-12) * p_max;

    auto project = [&](VecR<Real> v) {
        return project_simplex_cap(std::move(v), p_max);
    };
    auto value = [&](const VecR<Real>& q) {
        MatC<Real> j = heff * q.asDiagonal() * heff.adjoint();
        j += noise_var * MatC<Real>::Identity(m, m);
        const MatC<Real> x = solve_hpd(hermitianize(j), heff);
        Real sum = Real(0);
        for (int i = 0; i < total; ++i)
            sum += std::log(Real(1) - q[i] * std::real(heff.col(i).dot(x.col(i))));
        return sum;
    };

    PowerAllocation<Real> out;
    out.q = project(q_start);
    Real f;
    try {
        f = value(out.q);
    } catch (const std::exception&) {
        out.q = q_start;
        out.warning = true;
        return out;
    }

    const Real h = Real(1e-6) * std::max(p_max, Real(1));
    Real step = Real(0);  // set from the first gradient
    for (int iter = 0; iter < max_inner; ++iter) {
        out.iterations = iter + 1;
        VecR<Real> grad = VecR<Real>::Zero(total);
        bool grad_ok = true;
        try {
            for (int i = 0; i < total; ++i) {
                VecR<Real> probe = out.q;
                if (out.q[i] >= h) {
                    probe[i] = out.q[i] + h;
                    const Real fp = value(probe);
                    probe[i] = out.q[i] - h;
                    grad[i] = (fp - value(probe)) / (2 * h);
                } else {
                    probe[i] = out.q[i] + h;
                    grad[i] = (value(probe) - f) / h;
                }
            }
        } catch (const std::exception&) {
            grad_ok = false;
        }
        if (!grad_ok) break;

        // first move at most a quarter of the budget; adaptive afterwards
        if (step == Real(0))
            step = Real(0.25) * p_max / (grad.norm() + Real(1e-300));

        bool moved = false;
        bool stalled = false;
        for (Real alpha = step; alpha > Real(1e-18); alpha *= Real(0.5)) {
            VecR<Real> cand = project(out.q - alpha * grad);
            const Real dist = (cand - out.q).norm();
            if (dist < Real(1e-15) * (Real(1) + out.q.norm())) break;
            Real fc;
            try {
                fc = value(cand);
            } catch (const std::exception&) {
                continue;
            }
            const Real slope = grad.dot(cand - out.q);
            if (fc <= f + Real(1e-4) * slope && fc < f) {
                stalled = (f - fc) < Real(1e-12) * std::max(Real(1), std::abs(f));
                out.q = std::move(cand);
                f = fc;
                step = alpha * 2;
                moved = true;
                break;
            }
        }
        if (!moved || stalled) break;
    }
    for (int i = 0; i < total; ++i)
        if (out.q[i] < freeze) out.q[i] = Real(0);
    return out;
}

/// Objectives recorded after each of the four sub-steps of one iteration, plus
/// the duality residuals measured after the downlink power step.
template <class Real>
struct PmseIterationReport {
    std::array<Real, 4> substep_objective{};
    Real duality_sinr_gap = Real(0);
    Real duality_power_gap = Real(0);
    bool duality_fallback = false;
    bool power_warning = false;
};

template <class Real>
struct PmseTrace {
    Real initial_objective = Real(1);
    std::vector<PmseIterationReport<Real>> steps;
    std::vector<Real> sum_rate;  // nats, one per completed iteration
    int iterations = 0;
    bool converged = false;
    int duality_fallbacks = 0;
};

template <class Real>
struct PmseSolution {
    DesignState<Real> state;
    PmseTrace<Real> trace;
};

namespace detail {

// Column-normalize, keeping the matching fallback column where the update
// vanished (powerless streams keep their previous direction).
template <class Real>
void normalize_columns_keep(MatC<Real>& m, const MatC<Real>& fallback) {
    for (int c = 0; c < m.cols(); ++c) {
        const Real n = m.col(c).norm();
        if (n > Real(1e-300))
            m.col(c) /= n;
        else
            m.col(c) = fallback.col(c);
    }
}

}  // namespace detail

/// Random unit-norm precoder columns (orthonormal within each user's block),
/// uniform power on every substream, and MMSE decoder directions for that
/// starting precoder. Every stream starts with strictly positive power.
template <class Real>
DesignState<Real> init_state(const SystemConfig<Real>& cfg,
                             const ChannelSet<Real>& ch, RngStream id) {
    if (auto err = validate_config(cfg)) throw std::invalid_argument(*err);
    StreamRng rng(id);
    const int total = cfg.total_streams();
    DesignState<Real> st;
    st.streams = cfg.streams;
    st.tx.resize(cfg.tx_antennas, total);
    int off = 0;
    for (int k = 0; k < cfg.num_users; ++k) {
        MatC<Real> g(cfg.tx_antennas, cfg.streams[k]);
        for (int c = 0; c < g.cols(); ++c)
            for (int r = 0; r < g.rows(); ++r)
                g(r, c) = static_cast<Cplx<Real>>(rng.complex_normal());
        Eigen::HouseholderQR<MatC<Real>> qr(g);
        st.tx.middleCols(off, cfg.streams[k]) =
            qr.householderQ() *
            MatC<Real>::Identity(cfg.tx_antennas, cfg.streams[k]);
        off += cfg.streams[k];
    }
    const Real uniform = cfg.power_budget / Real(total);
    st.dl_power = VecR<Real>::Constant(total, uniform);
    st.ul_power = VecR<Real>::Constant(total, uniform);
    st.rx.resize(cfg.num_users);
    for (int k = 0; k < cfg.num_users; ++k) {
        MatC<Real> vk = mmse_downlink_decoder(k, ch, st.tx, st.dl_power,
                                              cfg.streams, cfg.noise_var);
        MatC<Real> unit(vk.rows(), vk.cols());
        for (int c = 0; c < unit.cols(); ++c) {
            VecC<Real> v(unit.rows());
            for (int r = 0; r < unit.rows(); ++r)
                v[r] = static_cast<Cplx<Real>>(rng.complex_normal());
            unit.col(c) = v / v.norm();
        }
        detail::normalize_columns_keep(vk, unit);
        st.rx[k] = std::move(vk);
    }
    return st;
}

/// One four-step iteration: uplink MMSE receivers -> downlink powers via
/// duality -> downlink MMSE decoders -> virtual uplink power allocation.
/// The recorded objective is non-increasing across the four sub-steps.
template <class Real>
std::pair<DesignState<Real>, PmseIterationReport<Real>> pmse_iterate(
    const DesignState<Real>& state, const ChannelSet<Real>& ch,
    const SystemConfig<Real>& cfg) {
    const Real sigma2 = cfg.noise_var;
    DesignState<Real> st = state;
    PmseIterationReport<Real> rep;

    // 1 - downlink precoder: normalized uplink MMSE receivers
    {
        const MatC<Real> heff = effective_uplink_channel(ch, st.rx);
        const int m = cfg.tx_antennas;
        MatC<Real> j = heff * st.ul_power.asDiagonal() * heff.adjoint();
        j += sigma2 * MatC<Real>::Identity(m, m);
        MatC<Real> unew =
            solve_hpd(hermitianize(j), heff) * st.ul_power.cwiseSqrt().asDiagonal();
        detail::normalize_columns_keep(unew, st.tx);
        st.tx = std::move(unew);
        VecR<Real> sinr = all_uplink_sinrs(ch, st.tx, st.rx, st.ul_power, sigma2);
        rep.substep_objective[0] =
            (Real(1) / (Real(1) + sinr.array())).prod();
    }

    // 2 - downlink power allocation via MSE duality
    {
        const VecR<Real> targets =
            all_uplink_sinrs(ch, st.tx, st.rx, st.ul_power, sigma2);
        auto p = downlink_power_from_duality(ch, st.tx, st.rx, targets, sigma2);
        if (!p) {
            rep.duality_fallback = true;
            return {state, rep};
        }
        st.dl_power = *p;
        const VecR<Real> dl =
            all_downlink_sinrs(ch, st.tx, st.rx, st.dl_power, sigma2);
        rep.duality_sinr_gap = (dl - targets).cwiseAbs().maxCoeff();
        rep.duality_power_gap =
            std::abs(st.dl_power.sum() - st.ul_power.sum());
        rep.substep_objective[1] = (Real(1) / (Real(1) + dl.array())).prod();
    }

    // 3 - virtual uplink precoder: normalized downlink MMSE decoders
    {
        for (int k = 0; k < cfg.num_users; ++k) {
            MatC<Real> vk = mmse_downlink_decoder(k, ch, st.tx, st.dl_power,
                                                  cfg.streams, sigma2);
            detail::normalize_columns_keep(vk, st.rx[k]);
            st.rx[k] = std::move(vk);
        }
        rep.substep_objective[2] = pmse_downlink_objective(ch, st, sigma2);
    }

    // dead streams (no power in either domain) contribute a unit factor to
    // the objective regardless of their decoder direction, so that direction
    // is free; point it at the dominant eigenvector of H_k^H J^{-1} H_k,
    // which maximizes the power step's incentive to re-light the stream
    {
        const Real freeze = Real(1e-12) * cfg.power_budget;
        std::vector<std::vector<int>> dead(cfg.num_users);
        bool any = false;
        for (int k = 0; k < cfg.num_users; ++k)
            for (int j = 0; j < cfg.streams[k]; ++j) {
                const int i = st.stream_offset(k) + j;
                if (st.dl_power[i] < freeze && st.ul_power[i] < freeze) {
                    dead[k].push_back(j);
                    any = true;
                }
            }
        if (any) {
            const MatC<Real> jmat =
                uplink_covariance(ch, st.rx, st.ul_power, sigma2);
            for (int k = 0; k < cfg.num_users; ++k) {
                if (dead[k].empty()) continue;
                const MatC<Real>& hk = ch.per_user[k];
                const MatC<Real> gk =
                    hermitianize(MatC<Real>(hk.adjoint() * solve_hpd(jmat, hk)));
                Eigen::SelfAdjointEigenSolver<MatC<Real>> es(gk);
                const int nk = static_cast<int>(gk.rows());
                for (std::size_t d = 0; d < dead[k].size(); ++d) {
                    const int col = nk - 1 - static_cast<int>(d % nk);
                    st.rx[k].col(dead[k][d]) = es.eigenvectors().col(col);
                }
            }
        }
    }

    // 4 - virtual uplink power allocation, warm-started from the uplink dual
    // of the current downlink SINRs so the domain switch cannot regress
    {
        const VecR<Real> targets =
            all_downlink_sinrs(ch, st.tx, st.rx, st.dl_power, sigma2);
        VecR<Real> start = st.ul_power;
        if (auto dual = uplink_power_from_duality(ch, st.tx, st.rx, targets, sigma2)) {
            if (pmse_uplink_objective(ch, st.rx, *dual, sigma2) <
                pmse_uplink_objective(ch, st.rx, start, sigma2))
                start = *dual;
        }
        auto alloc = uplink_power_allocation(ch, st.rx, cfg.power_budget,
                                             sigma2, start);
        rep.power_warning = alloc.warning;
        st.ul_power = alloc.warning ? start : alloc.q;
        rep.substep_objective[3] =
            pmse_uplink_objective(ch, st.rx, st.ul_power, sigma2);
    }

    return {std::move(st), rep};
}

/// Full solve: iterate until the relative PMSE decrease drops below
/// cfg.epsilon or cfg.max_iters is reached. With n_starts > 1 the best final
/// objective across independent random initializations wins.
template <class Real>
PmseSolution<Real> pmse_solve(const SystemConfig<Real>& cfg,
                              const ChannelSet<Real>& ch, RngStream id,
                              int n_starts = 1) {
    PmseSolution<Real> best;
    Real best_obj = std::numeric_limits<Real>::infinity();
    for (int s = 0; s < std::max(1, n_starts); ++s) {
        PmseSolution<Real> sol;
        sol.state = init_state(cfg, ch, id.substream(static_cast<uint64_t>(s)));
        sol.trace.initial_objective =
            pmse_uplink_objective(ch, sol.state.rx, sol.state.ul_power,
                                  cfg.noise_var);
        Real prev = sol.trace.initial_objective;
        for (int it = 0; it < cfg.max_iters; ++it) {
            auto [next, rep] = pmse_iterate(sol.state, ch, cfg);
            if (rep.duality_fallback) {
                sol.trace.duality_fallbacks++;
                break;
            }
            sol.state = std::move(next);
            sol.trace.steps.push_back(rep);
            sol.trace.iterations = it + 1;
            sol.trace.sum_rate.push_back([&] {
                Real r = Real(0);
                for (int k = 0; k < cfg.num_users; ++k)
                    r += user_rate_linear(k, ch, sol.state.tx, sol.state.dl_power,
                                          cfg.streams, cfg.noise_var);
                return r;
            }());
            const Real now = rep.substep_objective[3];
            if (prev > Real(0) && (prev - now) / prev < cfg.epsilon) {
                sol.trace.converged = true;
                break;
            }
            prev = now;
        }
        const Real final_obj = pmse_uplink_objective(ch, sol.state.rx,
                                                     sol.state.ul_power,
                                                     cfg.noise_var);
        if (final_obj < best_obj) {
            best_obj = final_obj;
            best = std::move(sol);
        }
    }
    return best;
}

}  // namespace mimodl
