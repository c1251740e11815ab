// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "mimodl/mse.hpp"
#include "support.hpp"

using namespace mimodl;
using namespace testsupport;

namespace {

DesignState<double> scalar_state(double p, double q) {
    DesignState<double> s;
    s.streams = {1};
    s.tx = MatC<double>::Ones(1, 1);
    s.rx = {MatC<double>::Ones(1, 1)};
    s.dl_power = VecR<double>::Constant(1, p);
    s.ul_power = VecR<double>::Constant(1, q);
    return s;
}

}  // namespace

TEST_CASE("uplink covariance: zero power gives the noise floor") {
    StreamRng rng(11, 0);
    auto inst = random_instance(rng);
    const int m = inst.cfg.tx_antennas;
    VecR<double> q = VecR<double>::Zero(inst.cfg.total_streams());
    MatC<double> j = uplink_covariance(inst.ch, inst.state.rx, q, 0.3);
    CHECK((j - 0.3 * MatC<double>::Identity(m, m)).norm() == doctest::Approx(0.0));
}

TEST_CASE("uplink covariance: scalar system gives J = 5") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    MatC<double> j = uplink_covariance(ch, st.rx, st.ul_power, 1.0);
    CHECK(std::abs(j(0, 0) - 5.0) < 1e-14);
}

TEST_CASE("uplink covariance dominates the noise floor (eigenvalue oracle)") {
    StreamRng rng(12, 0);
    for (int t = 0; t < 20; ++t) {
        auto inst = random_instance(rng);
        const double sigma2 = 0.25;
        MatC<double> j =
            uplink_covariance(inst.ch, inst.state.rx, inst.state.ul_power, sigma2);
        CHECK((j - j.adjoint()).norm() < 1e-12);
        Eigen::SelfAdjointEigenSolver<MatC<double>> es(j);
        CHECK(es.eigenvalues().minCoeff() >= sigma2 - 1e-12);
    }
}

TEST_CASE("downlink MSE matrix: zero decoder gives the identity") {
    StreamRng rng(13, 0);
    auto inst = random_instance(rng);
    for (auto& vk : inst.state.rx) vk.setZero();
    for (int k = 0; k < inst.cfg.num_users; ++k) {
        MatC<double> e = downlink_mse_general(k, inst.ch, inst.state, 0.1);
        const int lk = inst.cfg.streams[k];
        CHECK((e - MatC<double>::Identity(lk, lk)).norm() == doctest::Approx(0.0));
    }
}

TEST_CASE("downlink MSE matrix: scalar system with MMSE decoder gives 0.2") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    MatC<double> e = downlink_mse_mmse(0, ch, st.tx, st.dl_power, st.streams, 1.0);
    CHECK(std::abs(e(0, 0) - 0.2) < 1e-14);
}

TEST_CASE("general and reduced downlink MSE forms agree under MMSE decoding") {
    StreamRng rng(14, 0);
    for (int t = 0; t < 30; ++t) {
        auto inst = random_instance(rng);
        const double sigma2 = 0.2;
        DesignState<double> st = inst.state;
        for (int k = 0; k < inst.cfg.num_users; ++k)
            st.rx[k] = mmse_downlink_decoder(k, inst.ch, st.tx, st.dl_power,
                                             st.streams, sigma2);
        for (int k = 0; k < inst.cfg.num_users; ++k) {
            MatC<double> general = downlink_mse_general(k, inst.ch, st, sigma2);
            MatC<double> reduced = downlink_mse_mmse(k, inst.ch, st.tx,
                                                     st.dl_power, st.streams, sigma2);
            CHECK((general - reduced).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("MMSE decoder minimizes the MSE trace (perturbation oracle)") {
    StreamRng rng(15, 0);
    auto inst = random_instance(rng);
    const double sigma2 = 0.15;
    DesignState<double> st = inst.state;
    for (int k = 0; k < inst.cfg.num_users; ++k)
        st.rx[k] = mmse_downlink_decoder(k, inst.ch, st.tx, st.dl_power,
                                         st.streams, sigma2);
    for (int k = 0; k < inst.cfg.num_users; ++k) {
        const double base =
            downlink_mse_general(k, inst.ch, st, sigma2).trace().real();
        for (int t = 0; t < 100; ++t) {
            DesignState<double> bumped = st;
            MatC<double> delta(bumped.rx[k].rows(), bumped.rx[k].cols());
            for (int c = 0; c < delta.cols(); ++c)
                delta.col(c) = 0.1 * random_unit_vector(rng, static_cast<int>(delta.rows()));
            bumped.rx[k] += delta;
            const double perturbed =
                downlink_mse_general(k, inst.ch, bumped, sigma2).trace().real();
            CHECK(base <= perturbed + 1e-12);
        }
    }
}

TEST_CASE("MMSE decoder: scalar value and zero-power behavior") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    // J_1 = 4 + 1 = 5, V = J^{-1} H^H U sqrt(P) = 2/5.
    MatC<double> v = mmse_downlink_decoder(0, ch, st.tx, st.dl_power, st.streams, 1.0);
    CHECK(std::abs(v(0, 0) - std::complex<double>(0.4, 0.0)) < 1e-14);

    VecR<double> zero = VecR<double>::Zero(1);
    MatC<double> v0 = mmse_downlink_decoder(0, ch, st.tx, zero, st.streams, 1.0);
    CHECK(v0.norm() == 0.0);
}

TEST_CASE("MMSE uplink receiver: scalar value, zero power, optimality oracle") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    VecC<double> u = mmse_uplink_receiver(0, 0, ch, st.rx, st.ul_power, 1.0);
    CHECK(std::abs(u(0) - std::complex<double>(0.4, 0.0)) < 1e-14);

    VecR<double> zero = VecR<double>::Zero(1);
    VecC<double> u0 = mmse_uplink_receiver(0, 0, ch, st.rx, zero, 1.0);
    CHECK(u0.norm() == 0.0);

    StreamRng rng(16, 0);
    auto inst = random_instance(rng);
    const double sigma2 = 0.2;
    DesignState<double> sr = inst.state;
    const int k = 0, j = 0;
    sr.tx.col(sr.flat({k, j})) =
        mmse_uplink_receiver(k, j, inst.ch, sr.rx, sr.ul_power, sigma2);
    const double best = stream_sinr_uplink(k, j, inst.ch, sr, sigma2);
    for (int t = 0; t < 100; ++t) {
        DesignState<double> other = sr;
        other.tx.col(other.flat({k, j})) =
            random_unit_vector(rng, inst.cfg.tx_antennas);
        CHECK(best + 1e-12 >= stream_sinr_uplink(k, j, inst.ch, other, sigma2));
    }
}

TEST_CASE("uplink SINR: scalar value and scaling invariance") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    CHECK(stream_sinr_uplink(0, 0, ch, st, 1.0) == doctest::Approx(4.0).epsilon(1e-12));

    st.ul_power[0] = 0.0;
    CHECK(stream_sinr_uplink(0, 0, ch, st, 1.0) == 0.0);

    StreamRng rng(17, 0);
    auto inst = random_instance(rng);
    const double base = stream_sinr_uplink(0, 0, inst.ch, inst.state, 0.2);
    DesignState<double> scaled = inst.state;
    scaled.tx.col(0) *= std::complex<double>(-1.7, 2.3);
    const double after = stream_sinr_uplink(0, 0, inst.ch, scaled, 0.2);
    CHECK(after == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("uplink SINR equals explicit term-by-term power accounting") {
    StreamRng rng(18, 0);
    for (int t = 0; t < 20; ++t) {
        auto inst = random_instance(rng);
        const double sigma2 = 0.3;
        for (int k = 0; k < inst.cfg.num_users; ++k) {
            for (int j = 0; j < inst.cfg.streams[k]; ++j) {
                const double direct =
                    stream_sinr_uplink(k, j, inst.ch, inst.state, sigma2);
                const double oracle =
                    sinr_by_accounting(inst.ch, inst.state, k, j, sigma2);
                CHECK(std::abs(direct - oracle) < 1e-10 * (1.0 + oracle));
            }
        }
    }
}

TEST_CASE("uplink stream MSE: scalar values and the SINR identity") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    CHECK(stream_mse_uplink(0, 0, ch, st.rx, st.ul_power, 1.0) ==
          doctest::Approx(0.2).epsilon(1e-12));

    VecR<double> zero = VecR<double>::Zero(1);
    CHECK(stream_mse_uplink(0, 0, ch, st.rx, zero, 1.0) == 1.0);

    // Under the MMSE receiver, eps = 1/(1+gamma) to 1e-10.
    StreamRng rng(19, 0);
    for (int t = 0; t < 20; ++t) {
        auto inst = random_instance(rng);
        const double sigma2 = 0.2;
        DesignState<double> st2 = inst.state;
        for (int k = 0; k < inst.cfg.num_users; ++k)
            for (int j = 0; j < inst.cfg.streams[k]; ++j) {
                VecC<double> u = mmse_uplink_receiver(k, j, inst.ch, st2.rx,
                                                      st2.ul_power, sigma2);
                if (u.norm() > 0) st2.tx.col(st2.flat({k, j})) = u;
            }
        for (int k = 0; k < inst.cfg.num_users; ++k)
            for (int j = 0; j < inst.cfg.streams[k]; ++j) {
                const double eps =
                    stream_mse_uplink(k, j, inst.ch, st2.rx, st2.ul_power, sigma2);
                const double gamma = stream_sinr_uplink(k, j, inst.ch, st2, sigma2);
                CHECK(std::abs(eps - 1.0 / (1.0 + gamma)) < 1e-10);
                CHECK(eps > 0.0);
                CHECK(eps <= 1.0);
            }
    }
}

TEST_CASE("downlink SINR: scalar value and zero power") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    CHECK(stream_sinr_downlink(0, 0, ch, st, 1.0) ==
          doctest::Approx(4.0).epsilon(1e-12));
    st.dl_power[0] = 0.0;
    CHECK(stream_sinr_downlink(0, 0, ch, st, 1.0) == 0.0);
}

TEST_CASE("linear-precoding user rate: trivial and single-user direct formula") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    CHECK(user_rate_linear(0, ch, st.tx, st.dl_power, st.streams, 1.0) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-12));

    VecR<double> zero = VecR<double>::Zero(1);
    CHECK(user_rate_linear(0, ch, st.tx, zero, st.streams, 1.0) == 0.0);

    // K = 1: rate equals log det(I + H^H U P U^H H / sigma2).
    StreamRng rng(20, 0);
    auto cfg = make_cfg(1, 4, {3}, {3});
    auto chr = generate_channels(cfg, {5, 0});
    MatC<double> u = random_unit_columns(rng, 4, 3);
    VecR<double> p = random_powers(rng, 3, 1.0);
    const double sigma2 = 0.1;
    const double got = user_rate_linear(0, chr, u, p, cfg.streams, sigma2);
    MatC<double> inner = chr.per_user[0].adjoint() * u * p.asDiagonal() *
                         u.adjoint() * chr.per_user[0] / sigma2;
    inner += MatC<double>::Identity(3, 3);
    const double want = std::log(inner.determinant().real());
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("PDetMSE objective: trivial values and the rate identity") {
    auto ch = scalar_channel();
    auto st = scalar_state(4.0, 4.0);
    CHECK(pdetmse_objective(ch, st.tx, st.dl_power, st.streams, 1.0) ==
          doctest::Approx(std::log(0.2)).epsilon(1e-12));

    VecR<double> zero = VecR<double>::Zero(1);
    CHECK(pdetmse_objective(ch, st.tx, zero, st.streams, 1.0) == 0.0);

    // Sum of log det E_k equals minus the sum rate on 100 random instances.
    StreamRng rng(21, 0);
    for (int t = 0; t < 100; ++t) {
        auto inst = random_instance(rng);
        const double sigma2 = 0.1 + rng.uniform();
        double sum_rate = 0.0;
        for (int k = 0; k < inst.cfg.num_users; ++k)
            sum_rate += user_rate_linear(k, inst.ch, inst.state.tx,
                                         inst.state.dl_power, inst.cfg.streams, sigma2);
        const double obj = pdetmse_objective(inst.ch, inst.state.tx,
                                             inst.state.dl_power, inst.cfg.streams, sigma2);
        CHECK(obj <= 1e-15);
        CHECK(std::abs(obj + sum_rate) < 1e-8);
    }
}

TEST_CASE("MMSE MSE matrix eigenvalues live in (0, 1]") {
    StreamRng rng(22, 0);
    for (int t = 0; t < 20; ++t) {
        auto inst = random_instance(rng);
        for (int k = 0; k < inst.cfg.num_users; ++k) {
            MatC<double> e = downlink_mse_mmse(k, inst.ch, inst.state.tx,
                                               inst.state.dl_power,
                                               inst.cfg.streams, 0.2);
            Eigen::SelfAdjointEigenSolver<MatC<double>> es(e);
            CHECK(es.eigenvalues().minCoeff() > 0.0);
            CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("rate breakdown: totals, MSE range, and bit conversion") {
    StreamRng rng(24, 0);
    auto inst = random_instance(rng);
    const double sigma2 = 0.2;
    auto nats = downlink_rate_breakdown(inst.ch, inst.state, sigma2);
    auto bits = downlink_rate_breakdown(inst.ch, inst.state, sigma2, true);
    CHECK(nats.sum_rate == doctest::Approx(nats.user_rate.sum()).epsilon(1e-12));
    CHECK(bits.sum_rate ==
          doctest::Approx(nats.sum_rate / std::log(2.0)).epsilon(1e-12));
    for (int i = 0; i < nats.stream_mse.size(); ++i) {
        CHECK(nats.stream_sinr[i] >= 0.0);
        CHECK(nats.stream_mse[i] > 0.0);
        CHECK(nats.stream_mse[i] <= 1.0);
        CHECK(nats.stream_mse[i] ==
              doctest::Approx(1.0 / (1.0 + nats.stream_sinr[i])).epsilon(1e-12));
    }
}

TEST_CASE("zero receive vector is rejected") {
    StreamRng rng(25, 0);
    auto inst = random_instance(rng);
    inst.state.tx.col(0).setZero();
    CHECK_THROWS_AS(stream_sinr_uplink(0, 0, inst.ch, inst.state, 0.1),
                    std::invalid_argument);
    inst.state.rx[0].col(0).setZero();
    CHECK_THROWS_AS(stream_sinr_downlink(0, 0, inst.ch, inst.state, 0.1),
                    std::invalid_argument);
}

TEST_CASE("float instantiation of the core formulas compiles and agrees") {
    SystemConfig<float> cfg;
    cfg.num_users = 1;
    cfg.tx_antennas = 2;
    cfg.rx_antennas = {2};
    cfg.streams = {1};
    auto ch = generate_channels(cfg, {33, 0});
    std::vector<MatC<float>> rx = {MatC<float>::Ones(2, 1) / std::sqrt(2.0f)};
    VecR<float> q = VecR<float>::Constant(1, 1.0f);
    MatC<float> j = uplink_covariance(ch, rx, q, 0.5f);
    CHECK(j.rows() == 2);
    CHECK(std::abs(std::imag(j(0, 0))) < 1e-6f);
    const float eps = stream_mse_uplink(0, 0, ch, rx, q, 0.5f);
    CHECK(eps > 0.0f);
    CHECK(eps <= 1.0f);
}

TEST_CASE("det E_k * det J_k = det R_{N+I,k} (determinant identity)") {
    StreamRng rng(23, 0);
    for (int t = 0; t < 50; ++t) {
        auto inst = random_instance(rng);
        const double sigma2 = 0.15;
        for (int k = 0; k < inst.cfg.num_users; ++k) {
            const int off = inst.cfg.stream_offset(k);
            const int lk = inst.cfg.streams[k];
            MatC<double> e = downlink_mse_mmse(k, inst.ch, inst.state.tx,
                                               inst.state.dl_power,
                                               inst.cfg.streams, sigma2);
            MatC<double> jk = downlink_user_covariance(k, inst.ch, inst.state.tx,
                                                       inst.state.dl_power, sigma2);
            MatC<double> xk = inst.ch.per_user[k].adjoint() *
                              inst.state.tx.middleCols(off, lk);
            MatC<double> rni =
                jk - xk * inst.state.dl_power.segment(off, lk).asDiagonal() * xk.adjoint();
            const double lhs = logdet_hpd(e) + logdet_hpd(jk);
            const double rhs = logdet_hpd(hermitianize(rni));
            CHECK(std::abs(lhs - rhs) < 1e-8 * (1.0 + std::abs(rhs)));
        }
    }
}
