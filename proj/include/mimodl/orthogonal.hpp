// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mimodl/channel.hpp"
#include "mimodl/design.hpp"
#include "mimodl/linalg.hpp"
#include "mimodl/waterfill.hpp"

namespace mimodl {

/// Receive-antenna selection: the antenna indices each user actually uses.
struct SubsetChoice {
    std::vector<std::vector<int>> per_user;

    int total() const {
        int t = 0;
        for (const auto& s : per_user) t += static_cast<int>(s.size());
        return t;
    }
};

inline SubsetChoice full_subset(const std::vector<int>& rx_antennas) {
    SubsetChoice s;
    for (int n : rx_antennas) {
        std::vector<int> all(n);
        for (int i = 0; i < n; ++i) all[i] = i;
        s.per_user.push_back(std::move(all));
    }
    return s;
}

/// An orthogonalization-based design plus its achievable sum rate in nats.
template <class Real>
struct OrthogonalDesign {
    DesignState<Real> state;
    Real rate = Real(0);
    VecR<Real> gains;  // per-stream subchannel gains fed to the waterfiller
};

/// Zero forcing on the selected receive antennas: pseudo-inverse of the
/// stacked selected channel, one stream per selected antenna, waterfilling
/// over the inverted-Gram subchannel gains. Requires total selected <= M and
/// a full-rank selected channel.
template <class Real>
OrthogonalDesign<Real> zf_precoder(const ChannelSet<Real>& ch,
                                   const SubsetChoice& subset, Real p_max,
                                   Real noise_var) {
    const int m = static_cast<int>(ch.stacked.rows());
    const int ns = subset.total();
    if (ns == 0) throw std::invalid_argument("zf_precoder: empty selection");
    if (ns > m) throw std::invalid_argument("zf_precoder: selected antennas exceed M");

    MatC<Real> sel(m, ns);
    int col = 0;
    for (std::size_t k = 0; k < subset.per_user.size(); ++k)
        for (int ant : subset.per_user[k]) sel.col(col++) = ch.per_user[k].col(ant);

    const MatC<Real> gram = hermitianize(MatC<Real>(sel.adjoint() * sel));
    Eigen::LLT<MatC<Real>> llt(gram);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("zf_precoder: rank-deficient selected channel");
    const MatC<Real> ginv = llt.solve(MatC<Real>::Identity(ns, ns));
    const MatC<Real> w = sel * ginv;  // H_S^H w_i = e_i

    VecR<Real> gains(ns);
    for (int i = 0; i < ns; ++i) gains[i] = Real(1) / std::real(ginv(i, i));

    OrthogonalDesign<Real> out;
    out.gains = gains;
    const VecR<Real> p = waterfill(gains, p_max, noise_var);
    for (int i = 0; i < ns; ++i)
        out.rate += std::log(Real(1) + gains[i] * p[i] / noise_var);

    auto& st = out.state;
    st.streams.resize(subset.per_user.size());
    st.tx.resize(m, ns);
    st.dl_power = p;
    st.ul_power = VecR<Real>::Zero(ns);
    col = 0;
    for (std::size_t k = 0; k < subset.per_user.size(); ++k) {
        const int nk = static_cast<int>(ch.per_user[k].cols());
        const int lk = static_cast<int>(subset.per_user[k].size());
        st.streams[k] = lk;
        MatC<Real> vk = MatC<Real>::Zero(nk, lk);
        for (int j = 0; j < lk; ++j) {
            st.tx.col(col) = w.col(col) / w.col(col).norm();
            vk(subset.per_user[k][j], j) = Real(1);
            ++col;
        }
        st.rx.push_back(std::move(vk));
    }
    return out;
}

/// Block diagonalization on the selected receive antennas: each user's
/// precoder lives in the nullspace of the other users' selected channels,
/// with an SVD on the projected own channel and joint waterfilling across
/// every user's eigenmodes.
template <class Real>
OrthogonalDesign<Real> bd_precoder(const ChannelSet<Real>& ch,
                                   const SubsetChoice& subset, Real p_max,
                                   Real noise_var) {
    const int m = static_cast<int>(ch.stacked.rows());
    const int nusers = static_cast<int>(subset.per_user.size());
    if (subset.total() == 0) throw std::invalid_argument("bd_precoder: empty selection");

    struct UserModes {
        MatC<Real> tx;       // M x modes, unit columns
        MatC<Real> rx;       // N_k x modes, unit columns (selected antennas only)
        VecR<Real> gains;    // squared singular values
    };
    std::vector<UserModes> users(nusers);
    std::vector<Real> all_gains;

    for (int k = 0; k < nusers; ++k) {
        const int lk = static_cast<int>(subset.per_user[k].size());
        if (lk == 0) continue;

        int others = 0;
        for (int j = 0; j < nusers; ++j)
            if (j != k) others += static_cast<int>(subset.per_user[j].size());
        MatC<Real> interferers(m, others);
        int col = 0;
        for (int j = 0; j < nusers; ++j) {
            if (j == k) continue;
            for (int ant : subset.per_user[j])
                interferers.col(col++) = ch.per_user[j].col(ant);
        }

        MatC<Real> basis;  // orthonormal basis of the interference-free space
        if (others == 0) {
            basis = MatC<Real>::Identity(m, m);
        } else {
            Eigen::JacobiSVD<MatC<Real>> svd(interferers, Eigen::ComputeFullU);
            const auto& sv = svd.singularValues();
            int rank = 0;
            for (int i = 0; i < sv.size(); ++i)
                if (sv[i] > Real(1e-10) * sv[0]) ++rank;
            if (rank >= m)
                throw std::runtime_error("bd_precoder: nullspace dimension insufficient");
            basis = svd.matrixU().rightCols(m - rank);
        }

        MatC<Real> own(m, lk);
        for (int j = 0; j < lk; ++j) own.col(j) = ch.per_user[k].col(subset.per_user[k][j]);
        const MatC<Real> projected = own.adjoint() * basis;  // lk x d_k
        Eigen::JacobiSVD<MatC<Real>> svd(projected,
                                         Eigen::ComputeThinU | Eigen::ComputeThinV);
        const int modes = static_cast<int>(svd.singularValues().size());
        users[k].tx = basis * svd.matrixV().leftCols(modes);
        users[k].rx = svd.matrixU().leftCols(modes);
        users[k].gains = svd.singularValues().head(modes).array().square();
        for (int i = 0; i < modes; ++i) all_gains.push_back(users[k].gains[i]);
    }

    VecR<Real> gains(static_cast<int>(all_gains.size()));
    for (std::size_t i = 0; i < all_gains.size(); ++i)
        gains[static_cast<int>(i)] = all_gains[i];
    const VecR<Real> p = waterfill(gains, p_max, noise_var);

    OrthogonalDesign<Real> out;
    out.gains = gains;
    for (int i = 0; i < gains.size(); ++i)
        out.rate += std::log(Real(1) + gains[i] * p[i] / noise_var);

    auto& st = out.state;
    st.streams.resize(nusers);
    int total_modes = static_cast<int>(all_gains.size());
    st.tx.resize(m, total_modes);
    st.dl_power = p;
    st.ul_power = VecR<Real>::Zero(total_modes);
    int col = 0;
    for (int k = 0; k < nusers; ++k) {
        const int nk = static_cast<int>(ch.per_user[k].cols());
        const int modes = static_cast<int>(users[k].gains.size());
        st.streams[k] = modes;
        MatC<Real> vk = MatC<Real>::Zero(nk, modes);
        for (int j = 0; j < modes; ++j) {
            st.tx.col(col++) = users[k].tx.col(j);
            for (int a = 0; a < static_cast<int>(subset.per_user[k].size()); ++a)
                vk(subset.per_user[k][a], j) = users[k].rx(a, j);
        }
        st.rx.push_back(std::move(vk));
    }
    return out;
}

enum class OrthoScheme { Zf, Bd };

template <class Real>
struct SubsetSearch {
    SubsetChoice choice;
    OrthogonalDesign<Real> design;
    long candidates = 0;  // enumerated precoders, feasible or not
};

/// Exhaustive receive-antenna selection: every nonempty subset of the pooled
/// N receive antennas with at most min(N, M) members is a candidate; the
/// best feasible one under the requested scheme wins. Guarded to N <= 20.
template <class Real>
SubsetSearch<Real> best_subset_orthogonal(const ChannelSet<Real>& ch,
                                          OrthoScheme scheme, Real p_max,
                                          Real noise_var) {
    const int m = static_cast<int>(ch.stacked.rows());
    const int nusers = ch.num_users();
    const int total = static_cast<int>(ch.stacked.cols());
    if (total > 20)
        throw std::invalid_argument("best_subset_orthogonal: enumeration guard (N > 20)");
    const int max_take = std::min(total, m);

    std::vector<std::pair<int, int>> pool;  // (user, antenna)
    for (int k = 0; k < nusers; ++k)
        for (int a = 0; a < static_cast<int>(ch.per_user[k].cols()); ++a)
            pool.emplace_back(k, a);

    SubsetSearch<Real> best;
    Real best_rate = -Real(1);
    for (unsigned long mask = 1; mask < (1UL << total); ++mask) {
        if (__builtin_popcountl(mask) > max_take) continue;
        ++best.candidates;
        SubsetChoice choice;
        choice.per_user.assign(nusers, {});
        for (int b = 0; b < total; ++b)
            if (mask & (1UL << b))
                choice.per_user[pool[b].first].push_back(pool[b].second);
        try {
            OrthogonalDesign<Real> design =
                scheme == OrthoScheme::Zf
                    ? zf_precoder(ch, choice, p_max, noise_var)
                    : bd_precoder(ch, choice, p_max, noise_var);
            if (design.rate > best_rate) {
                best_rate = design.rate;
                best.choice = std::move(choice);
                best.design = std::move(design);
            }
        } catch (const std::exception&) {
            // infeasible candidate (rank/nullspace); skip
        }
    }
    if (best_rate < Real(0))
        throw std::runtime_error("best_subset_orthogonal: no feasible subset");
    return best;
}

}  // namespace mimodl
