// Open-system layer: Lindblad channels, heating/dephasing laws, readout error,
// and the coherence-time calibration.
#include <catch2/catch_amalgamated.hpp>

#include "cbsim/noise.hpp"

#include <cmath>

using namespace cbsim;

namespace {

LinearOperator zero_h(const ModeLayout& layout) {
    return LinearOperator(layout, Mat::Zero(layout.dim(), layout.dim()),
                          OperatorUnit::angular_frequency);
}

// Superposition (|g,0,0> + |g,n,0>)/sqrt2 for dephasing-decay probes.
HybridState zero_n_superposition(const ModeLayout& layout, int n) {
    Vec v = Vec::Zero(layout.dim());
    v(layout.basis_index(Spin::g, {0, 0})) = 1.0 / std::sqrt(2.0);
    v(layout.basis_index(Spin::g, {n, 0})) = 1.0 / std::sqrt(2.0);
    return HybridState::pure(layout, std::move(v));
}

double mode_coherence(const HybridState& rho, int n) {
    const ModeLayout& l = rho.layout();
    return std::abs(rho.rho()(l.basis_index(Spin::g, {0, 0}), l.basis_index(Spin::g, {n, 0})));
}

}  // namespace

TEST_CASE("collapse operator bookkeeping") {
    ModeLayout layout{4, 4};
    NoiseParams p;
    CHECK(collapse_operators(p, layout).empty());

    p.heat_a = 10.0;
    CHECK(collapse_operators(p, layout).size() == 2);  // up + down jumps

    p.deph_spin = 100.0;
    p.deph_mode_a = 5.0;
    p.deph_mode_b = 5.0;
    CHECK(collapse_operators(p, layout, false).size() == 5);

    // echoed sequences swap in the echo-suppressed spin rate
    p.deph_spin_echo = 0.0;
    CHECK(collapse_operators(p, layout, true).size() == 4);

    p.correlated_dephasing = true;  // one joint jump instead of two per-mode jumps
    CHECK(collapse_operators(p, layout, true).size() == 3);

    NoiseParams bad;
    bad.heat_a = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    NoiseParams bad2;
    bad2.detect_err = 0.7;
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}

TEST_CASE("evolution preserves trace and positivity") {
    ModeLayout layout{5, 4};
    NoiseParams p;
    p.heat_a = 50.0;
    p.heat_b = 30.0;
    p.deph_spin = 500.0;
    p.deph_mode_a = 400.0;
    p.deph_mode_b = 300.0;

    Vec v = Vec::Zero(layout.dim());
    v(layout.basis_index(Spin::g, {1, 0})) = std::sqrt(0.5);
    v(layout.basis_index(Spin::e, {0, 2})) = std::sqrt(0.5);
    HybridState state = HybridState::pure(layout, std::move(v));

    CbsParams gate;
    LinearOperator h = h_cbs(gate, layout);
    HybridState rho = lindblad_evolve(state, h, 0.2e-3, p);

    CHECK(std::abs(rho.rho().trace().real() - 1.0) < 1e-9);
    Eigen::SelfAdjointEigenSolver<Mat> es(rho.rho());
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
    CHECK_NOTHROW(check_density_invariants(rho, 1e-8));
}

TEST_CASE("heating grows the mean occupation at the configured rate") {
    ModeLayout layout{8, 2};
    NoiseParams p;
    p.heat_a = 100.0;  // quanta/s

    double t = 1.0e-3;
    HybridState rho = lindblad_evolve(HybridState::vacuum(layout), zero_h(layout), t, p);
    double n_mean = std::real(expectation(rho, number_operator(layout, Mode::a)));
    CHECK(std::abs(n_mean - p.heat_a * t) < 0.01 * p.heat_a * t);

    // symmetric up/down jumps: the growth rate is occupation-independent
    HybridState from_one = lindblad_evolve(HybridState::basis(layout, Spin::g, {1, 0}),
                                           zero_h(layout), t, p);
    double n1 = std::real(expectation(from_one, number_operator(layout, Mode::a)));
    CHECK(std::abs(n1 - (1.0 + p.heat_a * t)) < 0.01);
}

TEST_CASE("spin dephasing decays coherence at the configured rate") {
    ModeLayout layout{2, 2};
    NoiseParams p;
    p.deph_spin = 588.235294117647;  // 1 / (1.7 ms)

    Vec v = Vec::Zero(layout.dim());
    v(layout.basis_index(Spin::g, {0, 0})) = std::sqrt(0.5);
    v(layout.basis_index(Spin::e, {0, 0})) = std::sqrt(0.5);
    HybridState plus = HybridState::pure(layout, std::move(v));

    double t = 0.5e-3;
    HybridState rho = lindblad_evolve(plus, zero_h(layout), t, p);
    double coh = std::abs(rho.rho()(layout.basis_index(Spin::g, {0, 0}),
                                    layout.basis_index(Spin::e, {0, 0})));
    CHECK(std::abs(coh - 0.5 * std::exp(-p.deph_spin * t)) < 1e-6);

    // echoed sequences see the slower rate
    NoiseParams pe = p;
    pe.deph_spin_echo = 142.857142857143;  // 1 / (7 ms)
    HybridState rho_echo = lindblad_evolve(plus, zero_h(layout), t, pe, /*echoed=*/true);
    double coh_echo = std::abs(rho_echo.rho()(layout.basis_index(Spin::g, {0, 0}),
                                              layout.basis_index(Spin::e, {0, 0})));
    CHECK(std::abs(coh_echo - 0.5 * std::exp(-pe.deph_spin_echo * t)) < 1e-6);
    CHECK(coh_echo > coh);
}

TEST_CASE("motional dephasing follows the n^2 law") {
    ModeLayout layout{4, 2};
    NoiseParams p;
    p.deph_mode_a = 415.686274509804;

    // model: (0,n) coherence decays at gamma n^2 / 2, so tau_n = 2/(gamma n^2)
    double t = 0.4e-3;
    HybridState r1 = lindblad_evolve(zero_n_superposition(layout, 1), zero_h(layout), t, p);
    HybridState r2 = lindblad_evolve(zero_n_superposition(layout, 2), zero_h(layout), t, p);

    double c1 = mode_coherence(r1, 1);
    double c2 = mode_coherence(r2, 2);
    double rate1 = -std::log(c1 / 0.5) / t;
    double rate2 = -std::log(c2 / 0.5) / t;
    CHECK(std::abs(rate1 - p.deph_mode_a / 2.0) < 0.005 * rate1);
    CHECK(std::abs(rate2 / rate1 - 4.0) < 0.01);  // the n^2 law
}

TEST_CASE("correlated dephasing doubles the decay of anti-symmetric superpositions") {
    ModeLayout layout{3, 3};
    double gamma = 300.0;
    int n = 2;

    // (|n,0> + |0,n>)/sqrt2 on the ground spin
    Vec v = Vec::Zero(layout.dim());
    v(layout.basis_index(Spin::g, {n, 0})) = std::sqrt(0.5);
    v(layout.basis_index(Spin::g, {0, n})) = std::sqrt(0.5);
    HybridState pair = HybridState::pure(layout, std::move(v));

    NoiseParams indep;
    indep.deph_mode_a = gamma;
    indep.deph_mode_b = gamma;
    NoiseParams corr;
    corr.deph_mode_a = gamma;
    corr.correlated_dephasing = true;

    double t = 0.3e-3;
    auto coherence = [&](const NoiseParams& np) {
        HybridState rho = lindblad_evolve(pair, zero_h(layout), t, np);
        return std::abs(rho.rho()(layout.basis_index(Spin::g, {n, 0}),
                                  layout.basis_index(Spin::g, {0, n})));
    };

    // independent: rate gamma n^2; correlated single jump on (n_a - n_b): 2 gamma n^2
    double rate_i = -std::log(coherence(indep) / 0.5) / t;
    double rate_c = -std::log(coherence(corr) / 0.5) / t;
    CHECK(std::abs(rate_i - gamma * n * n) < 0.01 * rate_i);
    CHECK(std::abs(rate_c / rate_i - 2.0) < 0.01);
}

TEST_CASE("readout flips mix the reported probability") {
    CHECK(flip_readout(1.0, 0.0) == 1.0);
    CHECK(std::abs(flip_readout(1.0, 0.02) - 0.98) < 1e-15);
    CHECK(std::abs(flip_readout(0.0, 0.02) - 0.02) < 1e-15);
    CHECK(std::abs(flip_readout(0.5, 0.25) - 0.5) < 1e-15);
    CHECK_THROWS_AS(flip_readout(1.2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(flip_readout(0.5, 0.6), std::invalid_argument);
}

TEST_CASE("dephasing calibration from measured coherence times") {
    // single pair: gamma = 2 / (tau n^2)
    CHECK(std::abs(calibrate_motional_dephasing({{1, 5e-3}}) - 400.0) < 1e-9);

    // two-point least squares, reference values used by the shipped profile
    double ga = calibrate_motional_dephasing({{1, 5e-3}, {2, 1.2e-3}});
    double gb = calibrate_motional_dephasing({{1, 7e-3}, {2, 1.4e-3}});
    CHECK(std::abs(ga - 415.686274509804) < 1e-6);
    CHECK(std::abs(gb - 352.941176470588) < 1e-6);

    // round trip: predicted tau_2 falls inside the measured error bars
    CHECK(std::abs(predicted_coherence_time(ga, 2) - 1.20283018867925e-3) < 1e-12);
    CHECK(predicted_coherence_time(ga, 2) > 0.9e-3);
    CHECK(predicted_coherence_time(ga, 2) < 1.5e-3);
    CHECK(predicted_coherence_time(gb, 2) > 1.1e-3);
    CHECK(predicted_coherence_time(gb, 2) < 1.7e-3);

    // exact data reproduces the generating rate
    double gamma = 123.0;
    double g2 = calibrate_motional_dephasing(
        {{1, predicted_coherence_time(gamma, 1)}, {2, predicted_coherence_time(gamma, 2)},
         {3, predicted_coherence_time(gamma, 3)}});
    CHECK(std::abs(g2 - gamma) < 1e-9);

    CHECK_THROWS_AS(calibrate_motional_dephasing({}), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_motional_dephasing({{0, 1e-3}}), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_motional_dephasing({{1, -1e-3}}), std::invalid_argument);
    CHECK_THROWS_AS(predicted_coherence_time(0.0, 1), std::invalid_argument);
}

TEST_CASE("evolve validates its inputs") {
    ModeLayout layout{3, 3};
    NoiseParams p;
    HybridState v = HybridState::vacuum(layout);
    CHECK_THROWS_AS(lindblad_evolve(v, zero_h(layout), -1.0, p), std::invalid_argument);

    LinearOperator dimensionless(layout, Mat::Identity(layout.dim(), layout.dim()));
    CHECK_THROWS_AS(lindblad_evolve(v, dimensionless, 1e-6, p), std::invalid_argument);

    Mat nh = Mat::Zero(layout.dim(), layout.dim());
    nh(0, 1) = 1.0;  // not Hermitian
    CHECK_THROWS_AS(
        lindblad_evolve(v, LinearOperator(layout, nh, OperatorUnit::angular_frequency), 1e-6, p),
        std::invalid_argument);
}
