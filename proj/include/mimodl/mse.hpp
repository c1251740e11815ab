// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mimodl/channel.hpp"
#include "mimodl/design.hpp"
#include "mimodl/linalg.hpp"
#include "mimodl/types.hpp"

namespace mimodl {

namespace detail {
inline int offset_of(const std::vector<int>& streams, int k) {
    int off = 0;
    for (int i = 0; i < k; ++i) off += streams[i];
    return off;
}
inline int total_of(const std::vector<int>& streams) {
    return offset_of(streams, static_cast<int>(streams.size()));
}
}  // namespace detail

/// Effective uplink channel H~ = H V (M x L): column (k,j) is H_k v_kj.
template <class Real>
MatC<Real> effective_uplink_channel(const ChannelSet<Real>& ch,
                                    const std::vector<MatC<Real>>& rx) {
    if (rx.size() != ch.per_user.size())
        throw std::invalid_argument("effective_uplink_channel: user count mismatch");
    int total = 0;
    for (const auto& vk : rx) total += static_cast<int>(vk.cols());
    MatC<Real> ht(ch.stacked.rows(), total);
    int col = 0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        if (rx[k].rows() != ch.per_user[k].cols())
            throw std::invalid_argument("effective_uplink_channel: decoder shape mismatch");
        ht.middleCols(col, rx[k].cols()) = ch.per_user[k] * rx[k];
        col += static_cast<int>(rx[k].cols());
    }
    return ht;
}

/// Virtual uplink receive covariance J = H V Q V^H H^H + sigma^2 I_M.
/// Hermitian and J >= sigma^2 I by construction.
template <class Real>
MatC<Real> uplink_covariance(const ChannelSet<Real>& ch,
                             const std::vector<MatC<Real>>& rx,
                             const VecR<Real>& q, Real noise_var) {
    const MatC<Real> ht = effective_uplink_channel(ch, rx);
    if (q.size() != ht.cols())
        throw std::invalid_argument("uplink_covariance: power vector length mismatch");
    const int m = static_cast<int>(ht.rows());
    MatC<Real> j = ht * q.asDiagonal() * ht.adjoint();
    j += noise_var * MatC<Real>::Identity(m, m);
    return hermitianize(j);
}

/// Receive covariance at user k: J_k = H_k^H U P U^H H_k + sigma^2 I_{N_k}.
template <class Real>
MatC<Real> downlink_user_covariance(int k, const ChannelSet<Real>& ch,
                                    const MatC<Real>& tx, const VecR<Real>& p,
                                    Real noise_var) {
    if (tx.cols() != p.size())
        throw std::invalid_argument("downlink_user_covariance: power vector length mismatch");
    if (tx.rows() != ch.stacked.rows())
        throw std::invalid_argument("downlink_user_covariance: precoder row mismatch");
    const MatC<Real> x = ch.per_user[k].adjoint() * tx;  // N_k x L
    const int n = static_cast<int>(x.rows());
    MatC<Real> j = x * p.asDiagonal() * x.adjoint();
    j += noise_var * MatC<Real>::Identity(n, n);
    return hermitianize(j);
}

/// Linear MMSE decoder for user k, V_k = J_k^{-1} H_k^H U_k sqrt(P_k).
/// Returned unnormalized; callers normalize columns where the algorithm
/// requires unit norm.
template <class Real>
MatC<Real> mmse_downlink_decoder(int k, const ChannelSet<Real>& ch,
                                 const MatC<Real>& tx, const VecR<Real>& p,
                                 const std::vector<int>& streams, Real noise_var) {
    const int off = detail::offset_of(streams, k);
    const int lk = streams[k];
    const MatC<Real> jk = downlink_user_covariance(k, ch, tx, p, noise_var);
    const VecR<Real> root_pk = p.segment(off, lk).cwiseSqrt();
    const MatC<Real> b =
        ch.per_user[k].adjoint() * tx.middleCols(off, lk) * root_pk.asDiagonal();
    return solve_hpd(jk, b);
}

/// Downlink MSE matrix of user k for an arbitrary decoder V_k (the full
/// bilinear form in U, P, V_k).
template <class Real>
MatC<Real> downlink_mse_general(int k, const ChannelSet<Real>& ch,
                                const DesignState<Real>& state, Real noise_var) {
    const int off = state.stream_offset(k);
    const int lk = state.streams[k];
    const MatC<Real>& vk = state.rx[k];
    const MatC<Real> x = ch.per_user[k].adjoint() * state.tx;  // N_k x L
    const VecR<Real> root_pk = state.dl_power.segment(off, lk).cwiseSqrt();
    const MatC<Real> cross =
        vk.adjoint() * x.middleCols(off, lk) * root_pk.asDiagonal();  // L_k x L_k
    MatC<Real> e = vk.adjoint() * x * state.dl_power.asDiagonal() * x.adjoint() * vk;
    e += noise_var * (vk.adjoint() * vk);
    e -= cross;
    e -= cross.adjoint();
    e += MatC<Real>::Identity(lk, lk);
    return hermitianize(e);
}

/// Downlink MSE matrix of user k under the MMSE decoder (reduced form):
/// E_k = I - sqrt(P_k) U_k^H H_k J_k^{-1} H_k^H U_k sqrt(P_k).
template <class Real>
MatC<Real> downlink_mse_mmse(int k, const ChannelSet<Real>& ch,
                             const MatC<Real>& tx, const VecR<Real>& p,
                             const std::vector<int>& streams, Real noise_var) {
    const int off = detail::offset_of(streams, k);
    const int lk = streams[k];
    const MatC<Real> jk = downlink_user_covariance(k, ch, tx, p, noise_var);
    const VecR<Real> root_pk = p.segment(off, lk).cwiseSqrt();
    const MatC<Real> b =
        ch.per_user[k].adjoint() * tx.middleCols(off, lk) * root_pk.asDiagonal();
    MatC<Real> e = MatC<Real>::Identity(lk, lk) - b.adjoint() * solve_hpd(jk, b);
    return hermitianize(e);
}

/// MMSE receive vector for uplink stream (k,j): u = J^{-1} H_k v_kj sqrt(q_kj).
template <class Real>
VecC<Real> mmse_uplink_receiver(int k, int j, const ChannelSet<Real>& ch,
                                const std::vector<MatC<Real>>& rx,
                                const VecR<Real>& q, Real noise_var) {
    std::vector<int> streams(rx.size());
    for (std::size_t i = 0; i < rx.size(); ++i)
        streams[i] = static_cast<int>(rx[i].cols());
    const int flat = detail::offset_of(streams, k) + j;
    const MatC<Real> jmat = uplink_covariance(ch, rx, q, noise_var);
    const VecC<Real> b = ch.per_user[k] * rx[k].col(j) * std::sqrt(q[flat]);
    return VecC<Real>(solve_hpd(jmat, b));
}

/// Uplink SINR of stream (k,j) with the receive vector taken from state.tx.
/// Invariant under nonzero complex scaling of that column.
template <class Real>
Real stream_sinr_uplink(int k, int j, const ChannelSet<Real>& ch,
                        const DesignState<Real>& state, Real noise_var) {
    const VecC<Real> u = state.tx_col(k, j);
    if (u.norm() == Real(0))
        throw std::invalid_argument("stream_sinr_uplink: zero receive vector");
    const int flat = state.flat({k, j});
    const VecC<Real> heff = ch.per_user[k] * state.rx_col(k, j);
    const Real qkj = state.ul_power[flat];
    MatC<Real> jkj = uplink_covariance(ch, state.rx, state.ul_power, noise_var);
    jkj -= qkj * (heff * heff.adjoint());  // interference-plus-noise only
    const Cplx<Real> cross = u.dot(heff);  // u^H H_k v
    const Real signal = qkj * std::norm(cross);
    return signal / std::real(u.dot(jkj * u));
}

/// Uplink per-stream MSE under the MMSE receiver (closed form in V, q):
/// eps = 1 - q_kj v^H H_k^H J^{-1} H_k v. Always in (0, 1].
template <class Real>
Real stream_mse_uplink(int k, int j, const ChannelSet<Real>& ch,
                       const std::vector<MatC<Real>>& rx, const VecR<Real>& q,
                       Real noise_var) {
    std::vector<int> streams(rx.size());
    for (std::size_t i = 0; i < rx.size(); ++i)
        streams[i] = static_cast<int>(rx[i].cols());
    const int flat = detail::offset_of(streams, k) + j;
    const MatC<Real> jmat = uplink_covariance(ch, rx, q, noise_var);
    const VecC<Real> heff = ch.per_user[k] * rx[k].col(j);
    const VecC<Real> sol = solve_hpd(jmat, heff);
    return Real(1) - q[flat] * std::real(heff.dot(sol));
}

/// Downlink SINR of stream (k,j): desired power p_kj |v^H H_k^H u_kj|^2 over
/// the leakage of every other stream plus noise.
template <class Real>
Real stream_sinr_downlink(int k, int j, const ChannelSet<Real>& ch,
                          const DesignState<Real>& state, Real noise_var) {
    const VecC<Real> v = state.rx_col(k, j);
    if (v.norm() == Real(0))
        throw std::invalid_argument("stream_sinr_downlink: zero receive vector");
    const int flat = state.flat({k, j});
    // row_i = v^H H_k^H u_i across all streams i
    const auto row = (v.adjoint() * ch.per_user[k].adjoint() * state.tx).eval();
    Real interference = Real(0);
    for (int i = 0; i < row.cols(); ++i)
        if (i != flat) interference += state.dl_power[i] * std::norm(row(0, i));
    const Real signal = state.dl_power[flat] * std::norm(row(0, flat));
    return signal / (interference + noise_var * v.squaredNorm());
}

/// Achievable rate of user k under linear precoding with MMSE decoding,
/// in nats: log det J_k - log det R_{N+I,k}.
template <class Real>
Real user_rate_linear(int k, const ChannelSet<Real>& ch, const MatC<Real>& tx,
                      const VecR<Real>& p, const std::vector<int>& streams,
                      Real noise_var) {
    const int off = detail::offset_of(streams, k);
    const int lk = streams[k];
    const MatC<Real> jk = downlink_user_covariance(k, ch, tx, p, noise_var);
    const MatC<Real> xk = ch.per_user[k].adjoint() * tx.middleCols(off, lk);
    MatC<Real> rni = jk - xk * p.segment(off, lk).asDiagonal() * xk.adjoint();
    rni = hermitianize(rni);
    return logdet_hpd(jk) - logdet_hpd(rni);
}

/// Sum over users of log det E_k^DL under MMSE decoding. Equals minus the
/// linear-precoding sum rate in nats; always <= 0.
template <class Real>
Real pdetmse_objective(const ChannelSet<Real>& ch, const MatC<Real>& tx,
                       const VecR<Real>& p, const std::vector<int>& streams,
                       Real noise_var) {
    Real total = Real(0);
    for (int k = 0; k < static_cast<int>(streams.size()); ++k)
        total += logdet_hpd(downlink_mse_mmse(k, ch, tx, p, streams, noise_var));
    return total;
}

/// Uplink SINRs of all L streams at once (explicit leakage accounting through
/// the cross matrix U^H H V). Assumes unit-norm receive columns in tx.
template <class Real>
VecR<Real> all_uplink_sinrs(const ChannelSet<Real>& ch, const MatC<Real>& tx,
                            const std::vector<MatC<Real>>& rx,
                            const VecR<Real>& q, Real noise_var) {
    const MatC<Real> cross = tx.adjoint() * effective_uplink_channel(ch, rx);
    const int total = static_cast<int>(cross.rows());
    VecR<Real> out(total);
    for (int i = 0; i < total; ++i) {
        Real interference = Real(0);
        for (int j = 0; j < total; ++j)
            if (j != i) interference += q[j] * std::norm(cross(i, j));
        out[i] = q[i] * std::norm(cross(i, i)) / (interference + noise_var);
    }
    return out;
}

/// Downlink SINRs of all L streams at once. Assumes unit-norm decoder columns.
template <class Real>
VecR<Real> all_downlink_sinrs(const ChannelSet<Real>& ch, const MatC<Real>& tx,
                              const std::vector<MatC<Real>>& rx,
                              const VecR<Real>& p, Real noise_var) {
    const int total = static_cast<int>(tx.cols());
    VecR<Real> out(total);
    int off = 0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        const MatC<Real> w = rx[k].adjoint() * ch.per_user[k].adjoint() * tx;
        for (int j = 0; j < w.rows(); ++j) {
            Real interference = Real(0);
            for (int i = 0; i < total; ++i)
                if (i != off + j) interference += p[i] * std::norm(w(j, i));
            out[off + j] =
                p[off + j] * std::norm(w(j, off + j)) / (interference + noise_var);
        }
        off += static_cast<int>(w.rows());
    }
    return out;
}

/// Per-user rates and per-stream downlink SINR/MSE for a finished design.
template <class Real>
RateBreakdown<Real> downlink_rate_breakdown(const ChannelSet<Real>& ch,
                                            const DesignState<Real>& state,
                                            Real noise_var, bool bits = false) {
    RateBreakdown<Real> out;
    out.bits = bits;
    const int nk = state.num_users();
    const int total = state.total_streams();
    out.user_rate.resize(nk);
    out.stream_sinr.resize(total);
    out.stream_mse.resize(total);
    const Real scale = bits ? Real(1) / std::log(Real(2)) : Real(1);
    for (int k = 0; k < nk; ++k) {
        out.user_rate[k] =
            scale * user_rate_linear(k, ch, state.tx, state.dl_power,
                                     state.streams, noise_var);
        for (int j = 0; j < state.streams[k]; ++j) {
            const Real g = stream_sinr_downlink(k, j, ch, state, noise_var);
            out.stream_sinr[state.stream_offset(k) + j] = g;
            out.stream_mse[state.stream_offset(k) + j] = Real(1) / (Real(1) + g);
        }
    }
    out.sum_rate = out.user_rate.sum();
    return out;
}

}  // namespace mimodl
