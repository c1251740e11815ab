// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mimodl/channel.hpp"
#include "mimodl/design.hpp"
#include "mimodl/mse.hpp"
#include "mimodl/rng.hpp"

namespace mimodl {

/// Constants of the closed-form M-PSK BER approximation
/// BER(gamma) ~= c1 exp(-c2 gamma / (2^(c3 b) - c4)), valid for b >= 2.
template <class Real>
struct BerModelConstants {
    Real c1 = Real(0.25);
    Real c2 = Real(8);
    Real c3 = Real(1.94);
    Real c4 = Real(0);
};

/// Beyond 1024-PSK the approximation is meaningless at desk SNRs.
inline constexpr int kMaxBitsPerSymbol = 10;

template <class Real>
Real ber_psk_approx(Real gamma, int bits, const BerModelConstants<Real>& c = {}) {
    if (bits < 2)
        throw std::invalid_argument("ber_psk_approx: use ber_bpsk_exact for b < 2");
    if (gamma < Real(0)) throw std::invalid_argument("ber_psk_approx: gamma < 0");
    return c.c1 * std::exp(-c.c2 * gamma /
                           (std::pow(Real(2), c.c3 * Real(bits)) - c.c4));
}

template <class Real>
Real ber_bpsk_exact(Real gamma) {
    if (gamma < Real(0)) throw std::invalid_argument("ber_bpsk_exact: gamma < 0");
    return Real(0.5) * std::erfc(std::sqrt(gamma));
}

/// Model BER for a b-bit PSK stream: exact for BPSK, the closed-form
/// approximation for b >= 2.
template <class Real>
Real model_ber(Real gamma, int bits, const BerModelConstants<Real>& c = {}) {
    return bits < 2 ? ber_bpsk_exact(gamma) : ber_psk_approx(gamma, bits, c);
}

struct BitDecision {
    int bits = 0;
    bool bpsk_fallback = false;  // powered stream that misses the target even at b=1
};

/// Largest PSK depth whose model BER meets the target; BPSK when even that
/// fails but the stream carries power, zero bits otherwise.
template <class Real>
BitDecision naive_bits(Real gamma, Real beta, const BerModelConstants<Real>& c = {},
                       bool powered = true) {
    if (!powered) return {0, false};
    if (ber_bpsk_exact(gamma) > beta) return {1, true};
    int best = 1;
    for (int b = 2; b <= kMaxBitsPerSymbol; ++b) {
        if (ber_psk_approx(gamma, b, c) <= beta)
            best = b;
        else
            break;  // model BER increases with b
    }
    return {best, false};
}

template <class Real>
struct ProbabilisticDecision {
    BitDecision base;     // the naive choice
    int bits = 0;         // the drawn depth (base or base + 1)
    Real upgrade_prob = Real(0);
};

/// Randomized switch between the naive depth b and b+1 with probability
/// p = (beta - BER_b) / (BER_{b+1} - BER_b), so the model-average BER equals
/// the target exactly.
template <class Real>
ProbabilisticDecision<Real> probabilistic_bits(Real gamma, Real beta,
                                               const BerModelConstants<Real>& c,
                                               StreamRng& rng, bool powered = true) {
    ProbabilisticDecision<Real> out;
    out.base = naive_bits(gamma, beta, c, powered);
    out.bits = out.base.bits;
    if (out.base.bits == 0 || out.base.bpsk_fallback ||
        out.base.bits >= kMaxBitsPerSymbol)
        return out;
    const Real low = model_ber(gamma, out.base.bits, c);
    const Real high = model_ber(gamma, out.base.bits + 1, c);
    if (high > low) {
        out.upgrade_prob =
            std::min(Real(1), std::max(Real(0), (beta - low) / (high - low)));
        if (rng.uniform() < out.upgrade_prob) out.bits = out.base.bits + 1;
    }
    return out;
}

enum class BitLoading { Naive, Probabilistic };

/// Per-stream constellation depths for one designed downlink.
template <class Real>
struct ModulationPlan {
    std::vector<int> bits;        // flat stream order; 0 = stream unused
    VecR<Real> target_ber;
    VecR<Real> upgrade_prob;      // zero in naive mode
    std::vector<bool> fallback;   // BPSK-fallback flags
    int total_bits() const {
        int t = 0;
        for (int b : bits) t += b;
        return t;
    }
};

/// Bit loading against the per-stream downlink SINRs of a finished design.
template <class Real>
ModulationPlan<Real> make_modulation_plan(const ChannelSet<Real>& ch,
                                          const DesignState<Real>& state,
                                          Real noise_var, Real beta,
                                          BitLoading mode,
                                          const BerModelConstants<Real>& c,
                                          StreamRng& rng) {
    const int total = state.total_streams();
    ModulationPlan<Real> plan;
    plan.bits.resize(total);
    plan.target_ber = VecR<Real>::Constant(total, beta);
    plan.upgrade_prob = VecR<Real>::Zero(total);
    plan.fallback.assign(total, false);
    const VecR<Real> sinr =
        all_downlink_sinrs(ch, state.tx, state.rx, state.dl_power, noise_var);
    for (int i = 0; i < total; ++i) {
        const bool powered = state.dl_power[i] > Real(0);
        if (mode == BitLoading::Naive) {
            const BitDecision d = naive_bits(sinr[i], beta, c, powered);
            plan.bits[i] = d.bits;
            plan.fallback[i] = d.bpsk_fallback;
        } else {
            const auto d = probabilistic_bits(sinr[i], beta, c, rng, powered);
            plan.bits[i] = d.bits;
            plan.fallback[i] = d.base.bpsk_fallback;
            plan.upgrade_prob[i] = d.upgrade_prob;
        }
    }
    return plan;
}

/// Measured error rates of one plan over n_trials symbol vectors.
template <class Real>
struct BerReport {
    VecR<Real> stream_ber;
    std::vector<long> stream_bit_errors;
    long trials = 0;
    Real avg_ber = Real(0);              // total bit errors / total bits sent
    Real bits_per_transmission = Real(0);
};

namespace detail {
inline unsigned gray_code(unsigned m) { return m ^ (m >> 1); }
}  // namespace detail

/// Bit-level Monte Carlo over the designed downlink: i.i.d. Gray-labelled PSK
/// symbols per active stream, the linear channel y_k = H_k^H U sqrt(P) x + n,
/// per-stream decoding with V_k^H and phase-compensated hard detection.
template <class Real>
BerReport<Real> simulate_ber(const ChannelSet<Real>& ch,
                             const DesignState<Real>& state,
                             const ModulationPlan<Real>& plan, long n_trials,
                             Real noise_var, StreamRng& rng) {
    const int total = state.total_streams();
    if (static_cast<int>(plan.bits.size()) != total)
        throw std::invalid_argument("simulate_ber: plan does not match design");

    // effective complex gain of each stream at its own decoder output
    VecC<Real> gain(total);
    const int nusers = state.num_users();
    for (int k = 0; k < nusers; ++k)
        for (int j = 0; j < state.streams[k]; ++j) {
            const int i = state.stream_offset(k) + j;
            gain[i] = state.rx_col(k, j).dot(ch.per_user[k].adjoint() *
                                             state.tx_col(k, j)) *
                      std::sqrt(state.dl_power[i]);
        }

    const Real noise_scale = std::sqrt(noise_var);
    std::vector<long> errors(total, 0);
    VecC<Real> x(total);
    std::vector<unsigned> sent(total, 0);
    BerReport<Real> out;
    out.trials = n_trials;

    for (long trial = 0; trial < n_trials; ++trial) {
        for (int i = 0; i < total; ++i) {
            if (plan.bits[i] == 0) {
                x[i] = Cplx<Real>(0, 0);
                continue;
            }
            const unsigned order = 1u << plan.bits[i];
            const unsigned idx = static_cast<unsigned>(rng.below(order));
            sent[i] = idx;
            const Real phase = Real(2 * M_PI) * Real(idx) / Real(order);
            x[i] = Cplx<Real>(std::cos(phase), std::sin(phase));
        }
        for (int k = 0; k < nusers; ++k) {
            const int nk = static_cast<int>(ch.per_user[k].cols());
            VecC<Real> y = ch.per_user[k].adjoint() *
                           (state.tx * (state.dl_power.cwiseSqrt().asDiagonal() * x));
            for (int r = 0; r < nk; ++r)
                y[r] += noise_scale * static_cast<Cplx<Real>>(rng.complex_normal());
            for (int j = 0; j < state.streams[k]; ++j) {
                const int i = state.stream_offset(k) + j;
                if (plan.bits[i] == 0) continue;
                const unsigned order = 1u << plan.bits[i];
                const Cplx<Real> z = state.rx_col(k, j).dot(y) * std::conj(gain[i]);
                Real theta = std::atan2(std::imag(z), std::real(z));
                if (theta < Real(0)) theta += Real(2 * M_PI);
                const unsigned detected = static_cast<unsigned>(std::lround(
                                              theta * Real(order) / Real(2 * M_PI))) %
                                          order;
                errors[i] += __builtin_popcount(detail::gray_code(sent[i]) ^
                                                detail::gray_code(detected));
            }
        }
    }

    out.stream_bit_errors = errors;
    out.stream_ber = VecR<Real>::Zero(total);
    long total_errors = 0;
    long total_bits = 0;
    for (int i = 0; i < total; ++i) {
        const long bits_sent = static_cast<long>(plan.bits[i]) * n_trials;
        if (bits_sent > 0)
            out.stream_ber[i] = Real(errors[i]) / Real(bits_sent);
        total_errors += errors[i];
        total_bits += bits_sent;
        out.bits_per_transmission += Real(plan.bits[i]);
    }
    out.avg_ber = total_bits > 0 ? Real(total_errors) / Real(total_bits) : Real(0);
    return out;
}

}  // namespace mimodl
