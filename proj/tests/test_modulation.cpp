// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mimodl/modulation.hpp"
#include "support.hpp"

using namespace mimodl;
using namespace testsupport;

namespace {

// scalar single-stream design with gain 1 and power p
DesignState<double> scalar_design(double p) {
    DesignState<double> st;
    st.streams = {1};
    st.tx = MatC<double>::Ones(1, 1);
    st.rx = {MatC<double>::Ones(1, 1)};
    st.dl_power = VecR<double>::Constant(1, p);
    st.ul_power = st.dl_power;
    return st;
}

}  // namespace

TEST_CASE("PSK BER approximation: default constants and derived values") {
    BerModelConstants<double> c;
    CHECK(c.c1 == 0.25);
    CHECK(c.c2 == 8.0);
    CHECK(c.c3 == 1.94);
    CHECK(c.c4 == 0.0);

    CHECK(ber_psk_approx(0.0, 2) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(ber_psk_approx(10.0, 2) ==
          doctest::Approx(1.091755122337532e-3).epsilon(1e-12));
    CHECK(ber_psk_approx(10.0, 3) ==
          doctest::Approx(6.0664340923166145e-2).epsilon(1e-12));
    CHECK_THROWS(ber_psk_approx(10.0, 1));
}

TEST_CASE("PSK BER approximation: monotone in gamma and in depth") {
    for (int b = 2; b < 8; ++b) {
        double prev = 1.0;
        for (double g = 0.5; g < 40; g *= 1.7) {
            const double v = ber_psk_approx(g, b);
            CHECK(v < prev);
            CHECK(v <= 0.25);
            CHECK(v > 0.0);
            prev = v;
        }
    }
    for (double g : {0.5, 2.0, 10.0}) {
        double prev = 0.0;
        for (int b = 2; b <= 10; ++b) {
            const double v = ber_psk_approx(g, b);
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("BPSK exact BER: boundary and derived values") {
    CHECK(ber_bpsk_exact(0.0) == 0.5);
    CHECK(ber_bpsk_exact(10.0) ==
          doctest::Approx(3.872108215522037e-6).epsilon(1e-10));
    CHECK(ber_bpsk_exact(1e6) < 1e-300);  // gamma -> infinity limit
    double prev = 0.6;
    for (double g = 0.0; g < 20; g += 0.5) {
        const double v = ber_bpsk_exact(g);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("naive bit loading: derived thresholds and fallbacks") {
    BerModelConstants<double> c;
    auto d = naive_bits(10.0, 1e-2, c);
    CHECK(d.bits == 2);  // BER_2 ~ 1.09e-3 <= 1e-2 < BER_3 ~ 6.07e-2
    CHECK_FALSE(d.bpsk_fallback);

    auto low = naive_bits(0.0, 1e-2, c);
    CHECK(low.bits == 1);
    CHECK(low.bpsk_fallback);

    auto off = naive_bits(10.0, 1e-2, c, false);
    CHECK(off.bits == 0);
    CHECK_FALSE(off.bpsk_fallback);
}

TEST_CASE("naive bit loading: monotone in target and in SINR") {
    BerModelConstants<double> c;
    int prev = kMaxBitsPerSymbol + 1;
    for (double beta : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const int b = naive_bits(10.0, beta, c).bits;
        CHECK(b <= prev);
        prev = b;
    }
    prev = 0;
    for (double g : {0.1, 1.0, 5.0, 20.0, 100.0}) {
        const int b = naive_bits(g, 1e-2, c).bits;
        CHECK(b >= prev);
        prev = b;
    }
    // chosen depth always meets the model target when b >= 2
    StreamRng rng(90, 0);
    for (int t = 0; t < 200; ++t) {
        const double g = 100.0 * rng.uniform();
        const double beta = std::pow(10.0, -1 - 3 * rng.uniform());
        auto d = naive_bits(g, beta, c);
        if (d.bits >= 2) CHECK(ber_psk_approx(g, d.bits, c) <= beta);
        if (d.bits == 1 && !d.bpsk_fallback) CHECK(ber_bpsk_exact(g) <= beta);
    }
}

TEST_CASE("probabilistic bit loading: mixing probability and calibration") {
    BerModelConstants<double> c;
    StreamRng rng(91, 0);

    // boundary: target exactly at BER_b
    const double beta_eq = ber_psk_approx(10.0, 2, c);
    for (int t = 0; t < 50; ++t) {
        auto d = probabilistic_bits(10.0, beta_eq, c, rng);
        CHECK(d.bits == 2);
        CHECK(d.upgrade_prob == doctest::Approx(0.0));
    }

    auto d = probabilistic_bits(10.0, 1e-2, c, rng);
    CHECK(d.upgrade_prob == doctest::Approx(0.14953597796553192).epsilon(1e-9));

    // calibration: mixing the model BERs at p reproduces the target exactly
    const double low = ber_psk_approx(10.0, 2, c);
    const double high = ber_psk_approx(10.0, 3, c);
    CHECK((1 - d.upgrade_prob) * low + d.upgrade_prob * high ==
          doctest::Approx(1e-2).epsilon(1e-12));

    // empirical upgrade frequency over 1e5 draws within +-0.01
    long upgrades = 0;
    StreamRng rng2(92, 0);
    for (int t = 0; t < 100000; ++t)
        if (probabilistic_bits(10.0, 1e-2, c, rng2).bits == 3) ++upgrades;
    CHECK(std::abs(upgrades / 1e5 - 0.14953597796553192) < 0.01);
}

TEST_CASE("simulate_ber: noiseless interference-free stream is error-free") {
    auto ch = scalar_channel();
    auto st = scalar_design(1.0);
    ModulationPlan<double> plan;
    plan.bits = {3};
    plan.target_ber = VecR<double>::Constant(1, 1e-2);
    plan.upgrade_prob = VecR<double>::Zero(1);
    plan.fallback = {false};
    StreamRng rng(93, 0);
    auto rep = simulate_ber(ch, st, plan, 2000, 1e-12, rng);
    CHECK(rep.stream_ber[0] == 0.0);
    CHECK(rep.bits_per_transmission == 3.0);
    CHECK(rep.trials == 2000);
}

TEST_CASE("simulate_ber: BPSK over AWGN matches the analytic curve") {
    auto ch = scalar_channel();
    auto st = scalar_design(1.0);  // gamma = p / sigma2 = 1
    ModulationPlan<double> plan;
    plan.bits = {1};
    plan.target_ber = VecR<double>::Constant(1, 0.5);
    plan.upgrade_prob = VecR<double>::Zero(1);
    plan.fallback = {false};
    StreamRng rng(94, 0);
    const long n = 20000;
    auto rep = simulate_ber(ch, st, plan, n, 1.0, rng);
    const double want = ber_bpsk_exact(1.0);
    const double se = std::sqrt(want * (1 - want) / static_cast<double>(n));
    CHECK(std::abs(rep.stream_ber[0] - want) < 3 * se);
}

TEST_CASE("modulation plan: zero bits exactly on zero-power streams") {
    StreamRng rng(95, 0);
    auto inst = random_instance(rng);
    inst.state.dl_power[0] = 0.0;
    StreamRng plan_rng(95, 1);
    auto plan = make_modulation_plan(inst.ch, inst.state, 0.1, 1e-2,
                                     BitLoading::Naive, BerModelConstants<double>{},
                                     plan_rng);
    for (int i = 0; i < inst.state.total_streams(); ++i) {
        if (inst.state.dl_power[i] == 0.0)
            CHECK(plan.bits[i] == 0);
        else
            CHECK(plan.bits[i] >= 1);
    }
}
