// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace mimodl {

/// Dimensions and scalar parameters of one downlink scenario: K users, M
/// transmit antennas, per-user receive antennas N_k and stream counts L_k,
/// a sum power budget, the per-antenna noise variance and the solver
/// termination controls.
template <class Real>
struct SystemConfig {
    int num_users = 0;              // K
    int tx_antennas = 0;            // M
    std::vector<int> rx_antennas;   // N_k
    std::vector<int> streams;       // L_k
    Real power_budget = Real(1);    // P_max
    Real noise_var = Real(0.1);     // sigma^2 per receive antenna
    Real epsilon = Real(1e-6);      // relative convergence threshold
    int max_iters = 2000;

    int total_rx() const {
        return std::accumulate(rx_antennas.begin(), rx_antennas.end(), 0);
    }
    int total_streams() const {
        return std::accumulate(streams.begin(), streams.end(), 0);
    }
    int stream_offset(int k) const {
        return std::accumulate(streams.begin(), streams.begin() + k, 0);
    }
};

/// nullopt when all invariants hold, otherwise a message naming the first
/// violated one.
template <class Real>
std::optional<std::string> validate_config(const SystemConfig<Real>& cfg) {
    if (cfg.num_users < 1) return "num_users: K must be >= 1";
    if (cfg.tx_antennas < 1) return "tx_antennas: M must be >= 1";
    if (static_cast<int>(cfg.rx_antennas.size()) != cfg.num_users)
        return "rx_antennas: need one N_k per user";
    if (static_cast<int>(cfg.streams.size()) != cfg.num_users)
        return "streams: need one L_k per user";
    for (int k = 0; k < cfg.num_users; ++k) {
        if (cfg.rx_antennas[k] < 1) return "rx_antennas: N_k must be >= 1";
        const int cap = std::min(cfg.tx_antennas, cfg.rx_antennas[k]);
        if (cfg.streams[k] < 1 || cfg.streams[k] > cap)
            return "streams: L_k must satisfy 1 <= L_k <= min(M, N_k)";
    }
    if (!(cfg.power_budget > Real(0))) return "power_budget: must be positive";
    if (!(cfg.noise_var > Real(0))) return "noise_var: must be positive";
    if (!(cfg.epsilon > Real(0))) return "epsilon: must be positive";
    if (cfg.max_iters < 0) return "max_iters: must be >= 0";
    return std::nullopt;
}

}  // namespace mimodl
