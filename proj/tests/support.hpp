// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and independent oracles for the test suites. Everything in
// here must stay independent of the library code paths it is used to check:
// oracles recompute expected values from first principles (bisection,
// enumeration, explicit accounting) rather than calling the implementation.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "mimodl/channel.hpp"
#include "mimodl/config.hpp"
#include "mimodl/design.hpp"
#include "mimodl/rng.hpp"
#include "mimodl/types.hpp"

namespace testsupport {

using mimodl::ChannelSet;
using mimodl::DesignState;
using mimodl::MatC;
using mimodl::StreamRng;
using mimodl::SystemConfig;
using mimodl::VecC;
using mimodl::VecR;
using Cfg = SystemConfig<double>;

inline Cfg make_cfg(int k, int m, std::vector<int> n, std::vector<int> l,
                    double p_max = 1.0, double sigma2 = 0.1) {
    Cfg cfg;
    cfg.num_users = k;
    cfg.tx_antennas = m;
    cfg.rx_antennas = std::move(n);
    cfg.streams = std::move(l);
    cfg.power_budget = p_max;
    cfg.noise_var = sigma2;
    return cfg;
}

/// The hand-checkable scalar link: M = N = L = 1, H = [1].
inline Cfg scalar_cfg(double p_max = 4.0, double sigma2 = 1.0) {
    return make_cfg(1, 1, {1}, {1}, p_max, sigma2);
}

inline ChannelSet<double> scalar_channel() {
    ChannelSet<double> ch;
    MatC<double> h(1, 1);
    h(0, 0) = 1.0;
    ch.per_user = {h};
    ch.stacked = h;
    return ch;
}

inline VecC<double> random_unit_vector(StreamRng& rng, int n) {
    VecC<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.complex_normal();
    return v / v.norm();
}

inline MatC<double> random_unit_columns(StreamRng& rng, int rows, int cols) {
    MatC<double> m(rows, cols);
    for (int j = 0; j < cols; ++j) m.col(j) = random_unit_vector(rng, rows);
    return m;
}

/// Nonnegative power vector with sum exactly `budget_frac * p_max`.
inline VecR<double> random_powers(StreamRng& rng, int n, double p_max,
                                  double budget_frac = 1.0) {
    VecR<double> p(n);
    for (int i = 0; i < n; ++i) p[i] = rng.uniform_pos();
    return p * (budget_frac * p_max / p.sum());
}

struct RandomInstance {
    Cfg cfg;
    ChannelSet<double> ch;
    DesignState<double> state;
};

/// Random valid dimensions (K <= k_max, M <= m_max), CN(0,1) channels, random
/// unit-norm precoders/decoders and feasible random powers.
inline RandomInstance random_instance(StreamRng& rng, int k_max = 3, int m_max = 6) {
    const int k = 1 + static_cast<int>(rng.below(k_max));
    const int m = 2 + static_cast<int>(rng.below(m_max - 1));
    std::vector<int> n(k), l(k);
    for (int i = 0; i < k; ++i) {
        n[i] = 1 + static_cast<int>(rng.below(3));
        l[i] = 1 + static_cast<int>(rng.below(std::min(m, n[i])));
    }
    RandomInstance inst;
    inst.cfg = make_cfg(k, m, n, l);
    inst.ch = mimodl::generate_channels(inst.cfg, {rng.next_u64(), 0});
    const int total = inst.cfg.total_streams();
    inst.state.streams = inst.cfg.streams;
    inst.state.tx = random_unit_columns(rng, m, total);
    inst.state.rx.resize(k);
    for (int i = 0; i < k; ++i)
        inst.state.rx[i] = random_unit_columns(rng, n[i], l[i]);
    inst.state.dl_power = random_powers(rng, total, inst.cfg.power_budget);
    inst.state.ul_power = random_powers(rng, total, inst.cfg.power_budget);
    return inst;
}

/// Independent waterfilling oracle: bisection on the water level mu with
/// p_i = max(0, mu - sigma2/g_i) until the power budget is met.
inline VecR<double> bisect_waterfill(const std::vector<double>& gains, double p_total,
                                     double sigma2) {
    double lo = 0.0, hi = 0.0;
    for (double g : gains) hi = std::max(hi, sigma2 / g);
    hi += p_total + 1.0;
    auto used = [&](double mu) {
        double s = 0.0;
        for (double g : gains) s += std::max(0.0, mu - sigma2 / g);
        return s;
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (used(mid) > p_total ? hi : lo) = mid;
    }
    VecR<double> p(static_cast<int>(gains.size()));
    for (std::size_t i = 0; i < gains.size(); ++i)
        p[static_cast<int>(i)] = std::max(0.0, 0.5 * (lo + hi) - sigma2 / gains[i]);
    return p;
}

/// Closed-form single-user capacity (nats): eigen-waterfilling over the
/// squared singular values of H (channel H^H, noise sigma2, sum power p).
inline double single_user_capacity(const MatC<double>& h, double p_total,
                                   double sigma2) {
    Eigen::JacobiSVD<MatC<double>> svd(h);
    std::vector<double> gains;
    for (int i = 0; i < svd.singularValues().size(); ++i) {
        const double s = svd.singularValues()[i];
        if (s > 1e-12) gains.push_back(s * s);
    }
    const VecR<double> p = bisect_waterfill(gains, p_total, sigma2);
    double rate = 0.0;
    for (std::size_t i = 0; i < gains.size(); ++i)
        rate += std::log(1.0 + gains[i] * p[static_cast<int>(i)] / sigma2);
    return rate;
}

/// Explicit stream-by-stream SINR accounting: signal and every leakage term
/// summed one at a time (uplink direction; receiver u against streams of V,q).
inline double sinr_by_accounting(const ChannelSet<double>& ch,
                                 const DesignState<double>& state, int k, int j,
                                 double sigma2) {
    const VecC<double> u = state.tx_col(k, j);
    double interference = 0.0;
    double signal = 0.0;
    for (int l = 0; l < state.num_users(); ++l) {
        for (int i = 0; i < state.streams[l]; ++i) {
            const VecC<double> heff = ch.per_user[l] * state.rx_col(l, i);
            const double term =
                state.ul_power[state.flat({l, i})] * std::norm(u.dot(heff));
            if (l == k && i == j)
                signal = term;
            else
                interference += term;
        }
    }
    return signal / (interference + sigma2 * u.squaredNorm());
}

}  // namespace testsupport
