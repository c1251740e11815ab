// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mimodl/types.hpp"

namespace mimodl {

/// Waterfilling over parallel subchannels: p_i = max(0, mu - sigma2/g_i) with
/// sum(p) = p_total. The water level is found exactly by sorting the
/// breakpoints sigma2/g_i, not by iteration. Non-positive gains get zero
/// power; throws when no gain is positive.
template <class Real>
VecR<Real> waterfill(const VecR<Real>& gains, Real p_total, Real sigma2) {
    const int n = static_cast<int>(gains.size());
    std::vector<int> order;
    for (int i = 0; i < n; ++i)
        if (gains[i] > Real(0)) order.push_back(i);
    if (order.empty()) throw std::invalid_argument("waterfill: no positive gain");
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return gains[a] > gains[b]; });

    // with the m best channels active: mu = (P + sum_i sigma2/g_i) / m
    Real inv_sum = Real(0);
    Real mu = Real(0);
    int active = 0;
    for (int m = 1; m <= static_cast<int>(order.size()); ++m) {
        inv_sum += sigma2 / gains[order[m - 1]];
        const Real candidate = (p_total + inv_sum) / Real(m);
        if (candidate > sigma2 / gains[order[m - 1]]) {
            mu = candidate;
            active = m;
        } else {
            break;
        }
    }
    VecR<Real> p = VecR<Real>::Zero(n);
    for (int m = 0; m < active; ++m)
        p[order[m]] = mu - sigma2 / gains[order[m]];
    return p;
}

}  // namespace mimodl
