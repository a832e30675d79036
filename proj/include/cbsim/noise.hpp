#pragma once
// Open-system layer: heating, dephasing and readout error for the CBS register.
//
// Conventions. All rates are 1/e rates of the decaying quantity:
//   - heat_a/heat_b (quanta/s): infinite-temperature diffusion with jump
//     operators sqrt(ndot) a and sqrt(ndot) a^dag, so <n> grows linearly at ndot.
//   - deph_spin (1/s): jump sqrt(gamma_s/2) sigma_z decays the |g><e| coherence
//     as e^{-gamma_s t}; gamma_s = 1 / (1/e coherence time). A separate echoed
//     value applies when a sequence contains refocusing pi-pulses.
//   - deph_mode_* (1/s): jump sqrt(gamma) n decays the |0><n| coherence as
//     e^{-gamma n^2 t / 2}, i.e. the 1/e time of the (0,n) superposition is
//     tau_n = 2 / (gamma n^2).
// Master equation integrated with fixed-step RK4; step <= 1 us and
// <= 1/(50 x fastest rate).

#include "fock.hpp"
#include "generators.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cbsim {

struct NoiseParams {
    double heat_a = 0.0;          // quanta/s
    double heat_b = 0.0;          // quanta/s
    double deph_spin = 0.0;       // 1/s, free-running
    double deph_spin_echo = 0.0;  // 1/s, applies inside echoed sequences
    double deph_mode_a = 0.0;     // 1/s
    double deph_mode_b = 0.0;     // 1/s
    double nbar_a = 0.0;          // initial thermal occupation, mode a
    double nbar_b = 0.0;          // initial thermal occupation, mode b
    double detect_err = 0.0;      // probability a spin readout reports the wrong value
    bool correlated_dephasing = false;  // single jump on (n_a - n_b) instead of per-mode jumps

    void validate() const {
        for (double r : {heat_a, heat_b, deph_spin, deph_spin_echo, deph_mode_a, deph_mode_b,
                         nbar_a, nbar_b})
            if (r < 0.0 || !std::isfinite(r))
                throw std::invalid_argument("NoiseParams: rates and occupations must be finite and >= 0");
        if (detect_err < 0.0 || detect_err > 0.5)
            throw std::invalid_argument("NoiseParams: detect_err must lie in [0, 0.5]");
    }

    double spin_rate(bool echoed) const { return echoed ? deph_spin_echo : deph_spin; }

    // True if any Lindblad jump is active (detection error and initial thermal
    // occupation do not affect the propagator).
    bool any_jump(bool echoed) const {
        return heat_a > 0.0 || heat_b > 0.0 || spin_rate(echoed) > 0.0 || deph_mode_a > 0.0 ||
               deph_mode_b > 0.0;
    }

    // True if the run needs a density-operator path at all.
    bool any_noise(bool echoed) const {
        return any_jump(echoed) || nbar_a > 0.0 || nbar_b > 0.0;
    }

    NoiseParams scaled_heating(double factor) const {
        NoiseParams p = *this;
        p.heat_a *= factor;
        p.heat_b *= factor;
        return p;
    }

    bool operator==(const NoiseParams&) const = default;
};

// Jump operators scaled by sqrt(rate). Zero-rate channels are omitted; with all
// rates zero the list is empty and the evolution stays unitary.
inline std::vector<LinearOperator> collapse_operators(const NoiseParams& p, const ModeLayout& layout,
                                                      bool echoed = false) {
    p.validate();
    std::vector<LinearOperator> ops;
    auto add_mode_heating = [&](double rate, Mode m) {
        if (rate <= 0.0 || !layout.has_mode(m)) return;
        LinearOperator a = annihilation(layout, m);
        double s = std::sqrt(rate);
        ops.emplace_back(layout, s * a.mat.adjoint().eval());
        ops.emplace_back(layout, s * a.mat);
    };
    add_mode_heating(p.heat_a, Mode::a);
    add_mode_heating(p.heat_b, Mode::b);

    double gs = p.spin_rate(echoed);
    if (gs > 0.0) ops.emplace_back(layout, std::sqrt(gs / 2.0) * sigma_z(layout).mat);

    if (p.correlated_dephasing) {
        if (p.deph_mode_a > 0.0 && layout.has_mode(Mode::b)) {
            Mat joint = number_operator(layout, Mode::a).mat - number_operator(layout, Mode::b).mat;
            ops.emplace_back(layout, std::sqrt(p.deph_mode_a) * joint);
        } else if (p.deph_mode_a > 0.0) {
            ops.emplace_back(layout, std::sqrt(p.deph_mode_a) * number_operator(layout, Mode::a).mat);
        }
    } else {
        if (p.deph_mode_a > 0.0)
            ops.emplace_back(layout, std::sqrt(p.deph_mode_a) * number_operator(layout, Mode::a).mat);
        if (p.deph_mode_b > 0.0 && layout.has_mode(Mode::b))
            ops.emplace_back(layout, std::sqrt(p.deph_mode_b) * number_operator(layout, Mode::b).mat);
    }
    return ops;
}

namespace detail {

using SpMat = Eigen::SparseMatrix<Cplx>;

inline SpMat sparsify(const Mat& m, double drop = 0.0) {
    SpMat s(m.rows(), m.cols());
    std::vector<Eigen::Triplet<Cplx>> trip;
    for (int j = 0; j < m.cols(); ++j)
        for (int i = 0; i < m.rows(); ++i)
            if (std::abs(m(i, j)) > drop) trip.emplace_back(i, j, m(i, j));
    s.setFromTriplets(trip.begin(), trip.end());
    return s;
}

struct LindbladRhs {
    SpMat drift, drift_adj;   // -iH - (1/2) sum L^dag L, and its adjoint
    std::vector<SpMat> jumps, jump_adjs;

    Mat operator()(const Mat& rho) const {
        Mat out = drift * rho;
        out += rho * drift_adj;
        for (size_t k = 0; k < jumps.size(); ++k) {
            Mat lr = jumps[k] * rho;
            out += Mat(lr * jump_adjs[k]);
        }
        return out;
    }
};

}  // namespace detail

// Evolve a state under Hamiltonian h (angular-frequency units) with the noise
// channels of p for time t. Returns a density operator; trace is preserved by
// construction up to integration error.
inline HybridState lindblad_evolve(const HybridState& state, const LinearOperator& h, double t,
                                   const NoiseParams& p, bool echoed = false) {
    require_same_layout(h.layout, state.layout(), "lindblad_evolve");
    if (t < 0.0) throw std::invalid_argument("lindblad_evolve: negative duration");
    if (h.unit != OperatorUnit::angular_frequency)
        throw std::invalid_argument("lindblad_evolve: h must be a Hamiltonian (angular frequency)");
    if (!h.is_hermitian())
        throw std::invalid_argument("lindblad_evolve: h is not Hermitian");
    p.validate();

    HybridState rho_state = state.as_density();
    if (t == 0.0) return rho_state;

    std::vector<LinearOperator> ls = collapse_operators(p, state.layout(), echoed);

    double max_rate = std::max({p.heat_a, p.heat_b, p.spin_rate(echoed), p.deph_mode_a, p.deph_mode_b});
    double h_bound = 0.0;  // Gershgorin bound on the spectral radius of H
    for (int i = 0; i < h.mat.rows(); ++i) h_bound = std::max(h_bound, h.mat.row(i).cwiseAbs().sum());

    double dt_max = 1e-6;
    if (max_rate > 0.0) dt_max = std::min(dt_max, 1.0 / (50.0 * max_rate));
    if (h_bound > 0.0) dt_max = std::min(dt_max, 0.1 / h_bound);
    int steps = std::max(1, static_cast<int>(std::ceil(t / dt_max)));
    double dt = t / steps;

    detail::LindbladRhs rhs;
    Mat drift = Cplx(0.0, -1.0) * h.mat;
    for (const LinearOperator& l : ls) drift -= 0.5 * (l.mat.adjoint() * l.mat);
    rhs.drift = detail::sparsify(drift);
    rhs.drift_adj = detail::sparsify(drift.adjoint());
    rhs.jumps.reserve(ls.size());
    rhs.jump_adjs.reserve(ls.size());
    for (const LinearOperator& l : ls) {
        rhs.jumps.push_back(detail::sparsify(l.mat));
        rhs.jump_adjs.push_back(detail::sparsify(l.mat.adjoint()));
    }

    Mat rho = rho_state.rho();
    for (int s = 0; s < steps; ++s) {
        Mat k1 = rhs(rho);
        Mat k2 = rhs(rho + (0.5 * dt) * k1);
        Mat k3 = rhs(rho + (0.5 * dt) * k2);
        Mat k4 = rhs(rho + dt * k3);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return HybridState::density(state.layout(), std::move(rho));
}

// Classical readout error: the probability of reporting outcome 1 when the true
// probability is p and each shot flips with probability eps.
inline double flip_readout(double p, double eps) {
    if (p < -1e-12 || p > 1.0 + 1e-12)
        throw std::invalid_argument("flip_readout: probability outside [0,1]");
    if (eps < 0.0 || eps > 0.5) throw std::invalid_argument("flip_readout: eps outside [0, 0.5]");
    return p * (1.0 - eps) + (1.0 - p) * eps;
}

// ---------------------------------------------------------------------------
// Calibration of the motional dephasing rate from measured coherence times.
// Model: the (0,n) superposition decays with 1/e time tau_n = 2 / (gamma n^2).
// Least squares in rate space: minimize sum_i (gamma n_i^2/2 - 1/tau_i)^2.

inline double calibrate_motional_dephasing(const std::vector<std::pair<int, double>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("calibrate_motional_dephasing: empty input");
    double num = 0.0, den = 0.0;
    for (auto [n, tau] : pairs) {
        if (n <= 0)
            throw std::invalid_argument(
                "calibrate_motional_dephasing: a (0,0) superposition carries no constraint; n must be >= 1");
        if (tau <= 0.0 || !std::isfinite(tau))
            throw std::invalid_argument("calibrate_motional_dephasing: coherence times must be positive");
        double n2 = static_cast<double>(n) * n;
        num += n2 / tau;
        den += n2 * n2;
    }
    return 2.0 * num / den;
}

inline double predicted_coherence_time(double gamma, int n) {
    if (gamma <= 0.0 || n <= 0)
        throw std::invalid_argument("predicted_coherence_time: gamma and n must be positive");
    return 2.0 / (gamma * static_cast<double>(n) * n);
}

}  // namespace cbsim
