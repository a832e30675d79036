// State layer: basis indexing, hybrid states, operators, reductions.
#include <catch2/catch_amalgamated.hpp>

#include "cbsim/fock.hpp"

#include <cmath>
#include <complex>
#include <random>

using namespace cbsim;

TEST_CASE("basis index is spin-major then mode-a-major") {
    ModeLayout layout{3, 3};
    REQUIRE(layout.dim() == 18);
    REQUIRE(layout.spin_stride() == 9);
    CHECK(layout.basis_index(Spin::g, {0, 0}) == 0);
    CHECK(layout.basis_index(Spin::g, {0, 1}) == 1);
    CHECK(layout.basis_index(Spin::g, {1, 0}) == 3);
    CHECK(layout.basis_index(Spin::e, {0, 0}) == 9);
    CHECK(layout.basis_index(Spin::e, {2, 1}) == 16);

    // decode is the inverse on every index
    for (int i = 0; i < layout.dim(); ++i) {
        auto ket = layout.basis_decode(i);
        CHECK(layout.basis_index(ket.spin, {ket.occ[0], ket.occ[1]}) == i);
    }
}

TEST_CASE("basis index rejects out-of-range occupations") {
    ModeLayout layout{3, 3};
    CHECK_THROWS_AS(layout.basis_index(Spin::g, {3, 0}), std::out_of_range);
    CHECK_THROWS_AS(layout.basis_index(Spin::g, {0, -1}), std::out_of_range);
    CHECK_THROWS_AS(layout.basis_index(Spin::g, {0}), std::invalid_argument);
    CHECK_THROWS_AS(layout.basis_decode(18), std::out_of_range);
    CHECK_THROWS_AS(layout.cutoff(Mode::c), std::out_of_range);
}

TEST_CASE("layout validation") {
    CHECK_THROWS_AS(ModeLayout{std::vector<int>{}}, std::invalid_argument);
    CHECK_THROWS_AS((ModeLayout{4, 4, 4, 4}), std::invalid_argument);
    CHECK_THROWS_AS((ModeLayout{4, 1}), std::invalid_argument);
    ModeLayout three{4, 5, 6};
    CHECK(three.dim() == 2 * 4 * 5 * 6);
    CHECK(three.stride(Mode::a) == 30);
    CHECK(three.stride(Mode::b) == 6);
    CHECK(three.stride(Mode::c) == 1);
}

TEST_CASE("ladder operators satisfy the oscillator algebra") {
    ModeLayout layout{6, 4};
    LinearOperator a = annihilation(layout, Mode::a);
    LinearOperator ad = creation(layout, Mode::a);
    LinearOperator n_op = number_operator(layout, Mode::a);

    // a |n> = sqrt(n) |n-1>
    HybridState f3 = HybridState::basis(layout, Spin::g, {3, 0});
    HybridState lowered = apply(a, f3);
    int idx2 = layout.basis_index(Spin::g, {2, 0});
    CHECK(std::abs(lowered.amplitudes()(idx2) - std::sqrt(3.0)) < 1e-12);

    // [a, a^dag] = 1 away from the cutoff edge
    Mat comm = a.mat * ad.mat - ad.mat * a.mat;
    HybridState interior = HybridState::basis(layout, Spin::e, {2, 1});
    Vec v = comm * interior.amplitudes();
    CHECK((v - interior.amplitudes()).norm() < 1e-12);

    // a^dag a equals the number operator everywhere
    CHECK((ad.mat * a.mat - n_op.mat).norm() < 1e-12);
}

TEST_CASE("expectation values on pure and mixed states") {
    ModeLayout layout{4, 4};
    HybridState f2 = HybridState::basis(layout, Spin::e, {2, 1});
    CHECK(std::abs(expectation(f2, number_operator(layout, Mode::a)) - 2.0) < 1e-12);
    CHECK(std::abs(expectation(f2, number_operator(layout, Mode::b)) - 1.0) < 1e-12);
    CHECK(std::abs(expectation(f2, excited_projector(layout)) - 1.0) < 1e-12);

    HybridState rho = f2.as_density();
    CHECK_FALSE(rho.is_pure());
    CHECK(std::abs(expectation(rho, number_operator(layout, Mode::a)) - 2.0) < 1e-12);
    CHECK(std::abs(expectation(rho, sigma_z(layout)) - (-1.0)) < 1e-12);  // -1 on |e>
}

TEST_CASE("spin and mode marginals") {
    ModeLayout layout{4, 4};
    // (|g,1,0> + |e,3,2>)/sqrt2
    Vec v = Vec::Zero(layout.dim());
    v(layout.basis_index(Spin::g, {1, 0})) = 1.0 / std::sqrt(2.0);
    v(layout.basis_index(Spin::e, {3, 2})) = 1.0 / std::sqrt(2.0);
    HybridState s = HybridState::pure(layout, v);

    auto spin = s.spin_distribution();
    CHECK(std::abs(spin[0] - 0.5) < 1e-12);
    CHECK(std::abs(spin[1] - 0.5) < 1e-12);

    auto pa = s.mode_distribution(Mode::a);
    CHECK(std::abs(pa[1] - 0.5) < 1e-12);
    CHECK(std::abs(pa[3] - 0.5) < 1e-12);
    CHECK(std::abs(s.mode_parity(Mode::a) - (-1.0)) < 1e-12);  // occupations 1 and 3: odd
    CHECK(std::abs(s.mode_parity(Mode::b) - 1.0) < 1e-12);     // occupations 0 and 2: even
}

TEST_CASE("partial trace reduces to the expected marginals") {
    ModeLayout layout{3, 3};
    // Bell-like state between spin and mode a: (|g,0,0> + |e,1,0>)/sqrt2
    Vec v = Vec::Zero(layout.dim());
    v(layout.basis_index(Spin::g, {0, 0})) = 1.0 / std::sqrt(2.0);
    v(layout.basis_index(Spin::e, {1, 0})) = 1.0 / std::sqrt(2.0);
    HybridState s = HybridState::pure(layout, v);

    // Keep the spin: maximally mixed
    ReducedState spin = partial_trace(s, {subsystem_spin});
    REQUIRE(spin.dim() == 2);
    CHECK(std::abs(spin.rho(0, 0).real() - 0.5) < 1e-12);
    CHECK(std::abs(spin.rho(1, 1).real() - 0.5) < 1e-12);
    CHECK(std::abs(spin.rho(0, 1)) < 1e-12);

    // Keep spin + mode a: still pure (mode b factors out)
    ReducedState sa = partial_trace(s, {subsystem_spin, subsystem_of(Mode::a)});
    REQUIRE(sa.dim() == 6);
    Eigen::SelfAdjointEigenSolver<Mat> es(sa.rho);
    CHECK(std::abs(es.eigenvalues().maxCoeff() - 1.0) < 1e-12);

    // Keep both modes: coherence between (0,0) and (1,0) is destroyed
    ReducedState modes = partial_trace(s, {subsystem_of(Mode::a), subsystem_of(Mode::b)});
    REQUIRE(modes.dim() == 9);
    CHECK(std::abs(modes.rho(0, 0).real() - 0.5) < 1e-12);
    CHECK(std::abs(modes.rho(3, 3).real() - 0.5) < 1e-12);
    CHECK(std::abs(modes.rho(0, 3)) < 1e-12);

    CHECK_THROWS_AS(partial_trace(s, {}), std::invalid_argument);
    CHECK_THROWS_AS(partial_trace(s, {0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(partial_trace(s, {5}), std::out_of_range);
}

TEST_CASE("partial trace preserves the trace and positivity") {
    ModeLayout layout{4, 3};
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Vec v = Vec::Zero(layout.dim());
    for (int i = 0; i < layout.dim(); ++i) v(i) = Cplx(u(rng), u(rng));
    v.normalize();
    HybridState s = HybridState::pure(layout, v);
    for (auto keep : {std::vector<int>{0}, {1}, {2}, {0, 1}, {1, 2}}) {
        ReducedState r = partial_trace(s, keep);
        CHECK(std::abs(r.rho.trace().real() - 1.0) < 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat> es(r.rho);
        CHECK(es.eigenvalues().minCoeff() > -1e-12);
    }
}

TEST_CASE("density invariants accept physical states and reject broken ones") {
    ModeLayout layout{3, 3};
    CHECK_NOTHROW(check_density_invariants(HybridState::vacuum(layout)));

    Mat bad = Mat::Zero(layout.dim(), layout.dim());
    bad(0, 0) = 2.0;  // trace 2
    CHECK_THROWS(check_density_invariants(HybridState::density(layout, bad)));

    Mat neg = Mat::Zero(layout.dim(), layout.dim());
    neg(0, 0) = 1.5;
    neg(1, 1) = -0.5;  // negative eigenvalue
    CHECK_THROWS(check_density_invariants(HybridState::density(layout, neg)));
}

TEST_CASE("leakage counts the guard band population") {
    ModeLayout layout{5, 5};
    CHECK(HybridState::basis(layout, Spin::g, {2, 2}).leakage() == 0.0);
    CHECK(std::abs(HybridState::basis(layout, Spin::g, {3, 0}).leakage() - 1.0) < 1e-15);
    CHECK(std::abs(HybridState::basis(layout, Spin::e, {0, 4}).leakage() - 1.0) < 1e-15);
}

TEST_CASE("state constructors validate dimensions") {
    ModeLayout layout{3, 3};
    CHECK_THROWS_AS(HybridState::pure(layout, Vec::Zero(4)), std::invalid_argument);
    CHECK_THROWS_AS(HybridState::density(layout, Mat::Zero(4, 4)), std::invalid_argument);
    HybridState v = HybridState::vacuum(layout);
    CHECK(v.is_pure());
    CHECK(std::abs(v.weight() - 1.0) < 1e-15);
    CHECK_THROWS_AS(v.rho(), std::logic_error);
    CHECK_THROWS_AS(v.as_density().amplitudes(), std::logic_error);
}
