// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "mimodl/mse.hpp"
#include "mimodl/types.hpp"

namespace mimodl {

/// Cross-coupling data of the SINR duality: psi(i,j) = |h~_i^H u_j|^2 for
/// i != j (zero diagonal) and gain2(i) = |h~_i^H u_i|^2, where h~_i is column
/// i of H V. The diagonal matrix D of the duality system is
/// diag(gamma_i / gain2_i).
template <class Real>
struct DualityCoupling {
    MatR<Real> psi;
    VecR<Real> gain2;
};

template <class Real>
DualityCoupling<Real> build_coupling(const ChannelSet<Real>& ch,
                                     const MatC<Real>& tx,
                                     const std::vector<MatC<Real>>& rx) {
    const MatC<Real> heff = effective_uplink_channel(ch, rx);  // M x L
    const MatC<Real> cross = heff.adjoint() * tx;              // cross(i,j) = h~_i^H u_j
    const int total = static_cast<int>(cross.rows());
    DualityCoupling<Real> out;
    out.psi = cross.cwiseAbs2().real();
    out.gain2 = out.psi.diagonal();
    out.psi.diagonal().setZero();
    return out;
}

namespace detail {

// Solves the per-stream SINR-target system sigma2 * (D^{-1} - Psi)^{-1} 1 in
// the downlink direction, or the transposed system for the virtual uplink.
// Streams with zero target or vanishing effective gain carry zero power and
// are excluded from the linear system. nullopt when targets are infeasible
// (singular system or a negative power).
template <class Real>
std::optional<VecR<Real>> power_from_duality(const DualityCoupling<Real>& cpl,
                                             const VecR<Real>& targets,
                                             Real noise_var, bool downlink) {
    const int total = static_cast<int>(targets.size());
    std::vector<int> active;
    for (int i = 0; i < total; ++i) {
        // amplitude guard on |h~_i^H u_i|
        if (targets[i] > Real(0) && std::sqrt(cpl.gain2[i]) > Real(1e-14))
            active.push_back(i);
    }
    VecR<Real> power = VecR<Real>::Zero(total);
    if (active.empty()) return power;

    const int na = static_cast<int>(active.size());
    MatR<Real> sys(na, na);
    for (int a = 0; a < na; ++a) {
        for (int b = 0; b < na; ++b) {
            const int i = active[a];
            const int j = active[b];
            const Real coupling = downlink ? cpl.psi(i, j) : cpl.psi(j, i);
            sys(a, b) = (a == b ? cpl.gain2[i] / targets[i] : Real(0)) - coupling;
        }
    }
    Eigen::FullPivLU<MatR<Real>> lu(sys);
    if (!lu.isInvertible()) return std::nullopt;
    VecR<Real> reduced = lu.solve(VecR<Real>::Constant(na, noise_var));
    const Real scale = reduced.cwiseAbs().maxCoeff();
    if (reduced.minCoeff() < -Real(1e-10) * std::max(Real(1), scale))
        return std::nullopt;
    for (int a = 0; a < na; ++a) power[active[a]] = std::max(Real(0), reduced[a]);
    return power;
}

}  // namespace detail

/// Downlink power allocation hitting the given per-stream SINR targets:
/// p = sigma2 (D^{-1} - Psi)^{-1} 1. Requires unit-norm columns in tx/rx.
template <class Real>
std::optional<VecR<Real>> downlink_power_from_duality(
    const ChannelSet<Real>& ch, const MatC<Real>& tx,
    const std::vector<MatC<Real>>& rx, const VecR<Real>& targets,
    Real noise_var) {
    return detail::power_from_duality(build_coupling(ch, tx, rx), targets,
                                      noise_var, true);
}

/// Virtual-uplink power allocation hitting the same targets with the fixed
/// receivers in tx (transposed coupling). Same sum power as the downlink
/// solution for identical targets.
template <class Real>
std::optional<VecR<Real>> uplink_power_from_duality(
    const ChannelSet<Real>& ch, const MatC<Real>& tx,
    const std::vector<MatC<Real>>& rx, const VecR<Real>& targets,
    Real noise_var) {
    return detail::power_from_duality(build_coupling(ch, tx, rx), targets,
                                      noise_var, false);
}

}  // namespace mimodl
