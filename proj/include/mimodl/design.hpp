// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <numeric>
#include <stdexcept>
#include <vector>

#include "mimodl/types.hpp"

namespace mimodl {

/// Addresses stream j of user k.
struct StreamIndex {
    int user = 0;
    int stream = 0;
};

/// One transceiver design: global precoder U (M x L, unit-norm columns),
/// per-user decoders V_k (N_k x L_k, unit-norm columns), downlink powers p
/// and virtual-uplink powers q (both length L, nonnegative, sum <= P_max).
template <class Real>
struct DesignState {
    std::vector<int> streams;        // L_k per user
    MatC<Real> tx;                   // U
    std::vector<MatC<Real>> rx;      // V_k
    VecR<Real> dl_power;             // p
    VecR<Real> ul_power;             // q

    int num_users() const { return static_cast<int>(streams.size()); }
    int total_streams() const {
        return std::accumulate(streams.begin(), streams.end(), 0);
    }
    int stream_offset(int k) const {
        return std::accumulate(streams.begin(), streams.begin() + k, 0);
    }
    int flat(StreamIndex s) const { return stream_offset(s.user) + s.stream; }

    /// Column of U for stream j of user k.
    auto tx_col(int k, int j) const { return tx.col(stream_offset(k) + j); }
    /// Column of V_k for stream j.
    auto rx_col(int k, int j) const { return rx[k].col(j); }
};

/// Per-user rates plus the per-stream SINR/MSE diagnostics they derive from.
/// Rates are natural-log unless bits == true was requested at build time.
template <class Real>
struct RateBreakdown {
    VecR<Real> user_rate;
    VecR<Real> stream_sinr;
    VecR<Real> stream_mse;
    Real sum_rate = Real(0);
    bool bits = false;
};

}  // namespace mimodl
