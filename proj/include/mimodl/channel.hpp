// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <vector>

#include "mimodl/config.hpp"
#include "mimodl/rng.hpp"
#include "mimodl/types.hpp"

namespace mimodl {

/// Flat-fading channels for one realization. per_user[k] is H_k of shape
/// M x N_k, so the downlink channel seen by user k is H_k^H. stacked is
/// H = [H_1 ... H_K] of shape M x N.
template <class Real>
struct ChannelSet {
    std::vector<MatC<Real>> per_user;
    MatC<Real> stacked;

    const MatC<Real>& user(int k) const { return per_user[k]; }
    int num_users() const { return static_cast<int>(per_user.size()); }
};

/// i.i.d. Rayleigh fading: every entry CN(0,1), drawn column-major per user
/// in user order. Pure function of (cfg, rng stream id).
template <class Real>
ChannelSet<Real> generate_channels(const SystemConfig<Real>& cfg, RngStream id) {
    if (auto err = validate_config(cfg)) throw std::invalid_argument(*err);
    StreamRng rng(id);
    ChannelSet<Real> ch;
    ch.per_user.reserve(cfg.num_users);
    ch.stacked.resize(cfg.tx_antennas, cfg.total_rx());
    int col = 0;
    for (int k = 0; k < cfg.num_users; ++k) {
        MatC<Real> Hk(cfg.tx_antennas, cfg.rx_antennas[k]);
        for (int j = 0; j < Hk.cols(); ++j)
            for (int i = 0; i < Hk.rows(); ++i)
                Hk(i, j) = static_cast<Cplx<Real>>(rng.complex_normal());
        ch.stacked.middleCols(col, Hk.cols()) = Hk;
        col += static_cast<int>(Hk.cols());
        ch.per_user.push_back(std::move(Hk));
    }
    return ch;
}

}  // namespace mimodl
