#pragma once
// Pulse-sequence execution engine. Every protocol and every parsed sequence
// file lowers to the same Step list and runs through run_sequence, so the two
// entry points cannot drift apart.
//
// Routing:
//   - no active jump channels + pure state  -> structured appliers on the
//     amplitude vector (O(dim) for rotations/sidebands/full-gate swaps,
//     O(dim * cutoff) for displacements, cached dense matvec otherwise)
//   - no active jump channels + density     -> U rho U^dag per step
//   - active jump channels                  -> instantaneous gates as
//     U rho U^dag, timed steps integrated with the Lindblad solver

#include "cbsim/fock.hpp"
#include "cbsim/generators.hpp"
#include "cbsim/noise.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace cbsim {

struct RotationStep {
    double theta = 0.0;
    double phi = 0.0;
};

struct CbsStep {
    CbsParams params{};
    bool conditional = true;  // false: bare beam splitter, acts on both spin branches
};

struct DisplaceStep {
    Cplx alpha{0.0, 0.0};
    Mode mode = Mode::a;
};

struct SidebandStep {
    SidebandKind kind = SidebandKind::blue;
    Mode mode = Mode::a;
};

struct JsbStep {
    JointSidebandParams params{};
    double duration = 0.0;  // s
};

struct WaitStep {
    double duration = 0.0;  // s
};

using Step = std::variant<RotationStep, CbsStep, DisplaceStep, SidebandStep, JsbStep, WaitStep>;

struct Sequence {
    std::vector<Step> steps;
    // When true the spin dephasing channel runs at the echo-suppressed rate for
    // the whole sequence (the refocusing pulse is part of the step list).
    bool echoed = false;
};

// Either the plain full gate or its echoed decomposition [half, carrier pi,
// phase-flipped half], as a step list.
inline std::vector<Step> cbs_segment(const CbsParams& p, bool echoed) {
    if (!echoed) return {CbsStep{p}};
    CbsParams h1 = p, h2 = p;
    h1.duration = p.time() / 2.0;
    h2.duration = p.time() / 2.0;
    h2.upsilon = p.upsilon + pi;
    return {CbsStep{h1}, RotationStep{pi, 0.0}, CbsStep{h2}};
}

// ---------------------------------------------------------------------------
// Unitary cache. Sweeps re-run near-identical sequences hundreds of times; the
// dense matrices for non-closed-form steps are keyed by their full parameter
// set and rebuilt only once.

class UnitaryCache {
  public:
    const Mat& get(const std::string& key, const std::function<Mat()>& build) {
        auto it = entries_.find(key);
        if (it == entries_.end()) it = entries_.emplace(key, build()).first;
        return it->second;
    }
    size_t size() const { return entries_.size(); }

  private:
    std::map<std::string, Mat> entries_;
};

namespace detail {

inline std::string key_num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string step_key(const Step& step, const ModeLayout& layout, CbsRoute route) {
    std::string k = layout.describe() + "|";
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RotationStep>) {
                k += "R:" + key_num(s.theta) + "," + key_num(s.phi);
            } else if constexpr (std::is_same_v<T, CbsStep>) {
                k += std::string(s.conditional ? "CBS:" : "BS:") + key_num(s.params.xi) + "," +
                     key_num(s.params.upsilon) + "," + key_num(s.params.time()) + "," +
                     mode_name(s.params.mode1) + mode_name(s.params.mode2) + "," +
                     (route == CbsRoute::matrix_exp ? "x" : "a");
            } else if constexpr (std::is_same_v<T, DisplaceStep>) {
                k += std::string("D:") + key_num(s.alpha.real()) + "," + key_num(s.alpha.imag()) + "," +
                     mode_name(s.mode);
            } else if constexpr (std::is_same_v<T, SidebandStep>) {
                k += std::string("SB:") + (s.kind == SidebandKind::blue ? "b" : "r") + "," +
                     mode_name(s.mode);
            } else if constexpr (std::is_same_v<T, JsbStep>) {
                k += "JSB:" + key_num(s.params.omega0) + "," + key_num(s.duration) + "," +
                     mode_name(s.params.mode1) + mode_name(s.params.mode2);
            } else {
                k += "W:" + key_num(s.duration);
            }
        },
        step);
    return k;
}

}  // namespace detail

// Dense unitary for a single step (identity for waits).
inline LinearOperator step_unitary(const Step& step, const ModeLayout& layout,
                                   CbsRoute route = CbsRoute::automatic) {
    return std::visit(
        [&](const auto& s) -> LinearOperator {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RotationStep>) {
                return spin_rotation(s.theta, s.phi, layout);
            } else if constexpr (std::is_same_v<T, CbsStep>) {
                return s.conditional ? u_cbs(s.params, layout, route) : u_bs(s.params, layout, route);
            } else if constexpr (std::is_same_v<T, DisplaceStep>) {
                return displacement(s.alpha, s.mode, layout);
            } else if constexpr (std::is_same_v<T, SidebandStep>) {
                return sideband_pi(s.kind, s.mode, layout);
            } else if constexpr (std::is_same_v<T, JsbStep>) {
                return joint_sideband_u(s.params, s.duration, layout);
            } else {
                return identity_op(layout);
            }
        },
        step);
}

// Hamiltonian driving a timed step (zero operator for waits).
inline LinearOperator step_hamiltonian(const Step& step, const ModeLayout& layout) {
    return std::visit(
        [&](const auto& s) -> LinearOperator {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, CbsStep>) {
                return s.conditional ? h_cbs(s.params, layout) : h_bs(s.params, layout);
            } else if constexpr (std::is_same_v<T, JsbStep>) {
                return joint_sideband_h(s.params, layout);
            } else if constexpr (std::is_same_v<T, WaitStep>) {
                return LinearOperator(layout, Mat::Zero(layout.dim(), layout.dim()),
                                      OperatorUnit::angular_frequency);
            } else {
                throw std::logic_error("step_hamiltonian: step is an instantaneous gate");
            }
        },
        step);
}

inline double step_duration(const Step& step) {
    return std::visit(
        [](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, CbsStep>)
                return s.params.time();
            else if constexpr (std::is_same_v<T, JsbStep>)
                return s.duration;
            else if constexpr (std::is_same_v<T, WaitStep>)
                return s.duration;
            else
                return 0.0;
        },
        step);
}

namespace detail {

inline void apply_rotation_pure(Vec& v, const ModeLayout& layout, double theta, double phi) {
    Eigen::Matrix2cd r = spin_rotation_matrix(theta, phi);
    int half = layout.spin_stride();
    for (int i = 0; i < half; ++i) {
        Cplx vg = v(i), ve = v(i + half);
        v(i) = r(0, 0) * vg + r(0, 1) * ve;
        v(i + half) = r(1, 0) * vg + r(1, 1) * ve;
    }
}

inline void apply_sideband_pure(Vec& v, const ModeLayout& layout, SidebandKind kind, Mode m) {
    int half = layout.spin_stride();
    int s = layout.stride(m), c = layout.cutoff(m);
    const Cplx mi(0.0, -1.0);
    for (int i = 0; i < half; ++i) {
        int n = (i / s) % c;
        int partner;  // excited-branch index paired with |g, n>
        if (kind == SidebandKind::blue) {
            if (n + 1 >= c) continue;
            partner = i + half + s;
        } else {
            if (n == 0) continue;
            partner = i + half - s;
        }
        Cplx vg = v(i), ve = v(partner);
        v(i) = mi * ve;
        v(partner) = mi * vg;
    }
}

inline void apply_mode_factor_pure(Vec& v, const ModeLayout& layout, Mode m, const Mat& factor) {
    int s = layout.stride(m), c = layout.cutoff(m);
    int block = s * c;
    Vec tmp(c);
    for (int base = 0; base < layout.dim(); base += block)
        for (int off = 0; off < s; ++off) {
            for (int n = 0; n < c; ++n) tmp(n) = v(base + off + n * s);
            tmp = factor * tmp;
            for (int n = 0; n < c; ++n) v(base + off + n * s) = tmp(n);
        }
}

inline void apply_step_pure(Vec& v, const ModeLayout& layout, const Step& step, CbsRoute route,
                            UnitaryCache& cache) {
    if (const auto* r = std::get_if<RotationStep>(&step)) {
        apply_rotation_pure(v, layout, r->theta, r->phi);
        return;
    }
    if (const auto* sb = std::get_if<SidebandStep>(&step)) {
        apply_sideband_pure(v, layout, sb->kind, sb->mode);
        return;
    }
    if (std::get_if<WaitStep>(&step)) return;
    if (const auto* d = std::get_if<DisplaceStep>(&step)) {
        const Mat& factor = cache.get("factor|" + step_key(step, layout, route),
                                      [&] { return displacement_factor(d->alpha, layout.cutoff(d->mode)); });
        apply_mode_factor_pure(v, layout, d->mode, factor);
        return;
    }
    if (const auto* cb = std::get_if<CbsStep>(&step);
        cb && route == CbsRoute::automatic && swap_phase_applicable(cb->params, layout)) {
        if (auto k = tau_multiple(cb->params.time(), cb->params.tau())) {
            for (int rep = 0; rep < *k; ++rep)
                apply_swap_phase_once(v, layout, cb->params.mode1, cb->params.mode2, cb->params.upsilon,
                                      cb->conditional);
            return;
        }
    }
    const Mat& u = cache.get(step_key(step, layout, route),
                             [&] { return step_unitary(step, layout, route).mat; });
    v = u * v;
}

}  // namespace detail

struct RunOptions {
    NoiseParams noise{};
    CbsRoute route = CbsRoute::automatic;  // forced route for beam-splitter steps
    UnitaryCache* cache = nullptr;         // optional shared cache across calls
};

inline HybridState run_sequence(HybridState state, const Sequence& seq, const RunOptions& opt = {}) {
    const ModeLayout layout = state.layout();
    opt.noise.validate();
    UnitaryCache local;
    UnitaryCache& cache = opt.cache ? *opt.cache : local;
    const bool jumps = opt.noise.any_jump(seq.echoed);

    if (!jumps && state.is_pure()) {
        Vec v = state.amplitudes();
        for (const Step& step : seq.steps) detail::apply_step_pure(v, layout, step, opt.route, cache);
        return HybridState::pure(layout, std::move(v));
    }

    HybridState rho = state.as_density();
    for (const Step& step : seq.steps) {
        bool timed = std::holds_alternative<CbsStep>(step) || std::holds_alternative<JsbStep>(step) ||
                     std::holds_alternative<WaitStep>(step);
        if (jumps && timed) {
            rho = lindblad_evolve(rho, step_hamiltonian(step, layout), step_duration(step), opt.noise,
                                  seq.echoed);
        } else {
            const Mat& u = cache.get(detail::step_key(step, layout, opt.route),
                                     [&] { return step_unitary(step, layout, opt.route).mat; });
            rho = HybridState::density(layout, u * rho.rho() * u.adjoint());
        }
    }
    return rho;
}

// Total wall-clock duration of a sequence (instantaneous gates count as zero).
inline double sequence_duration(const Sequence& seq) {
    double t = 0.0;
    for (const Step& s : seq.steps) t += step_duration(s);
    return t;
}

}  // namespace cbsim
