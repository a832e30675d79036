#pragma once
// Measurement protocols built on the sequence engine: swap-test overlap
// estimation, coherent-state reconstruction, displaced-parity Wigner scans,
// NOON-state generation and tomography, and the Fredkin truth table.
//
// Every protocol supports three readout modes through ShotPlan:
//   exact        - report the Born-rule probability (se = 0)
//   sampled      - draw multinomial counts with a per-point derived RNG stream
// and applies the classical spin detection error from NoiseParams in both.

#include "cbsim/engine.hpp"
#include "cbsim/estimators.hpp"

#include <algorithm>
#include <array>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace cbsim {

struct ShotPlan {
    bool sampled = false;
    long long shots_per_point = 300;
    std::uint64_t seed = 0;
};

struct PointEstimate {
    double value = 0.0;
    double se = 0.0;  // zero in exact mode
};

// ---------------------------------------------------------------------------
// Readout helpers

inline PointEstimate excited_estimate(const HybridState& state, const NoiseParams& noise,
                                      const ShotPlan& plan, std::uint64_t stream_index) {
    double p = state.spin_distribution()[1];
    p = std::clamp(p, 0.0, 1.0);
    p = flip_readout(p, noise.detect_err);
    if (!plan.sampled) return {p, 0.0};
    auto counts = sample_counts({p, 1.0 - p}, plan.shots_per_point, derive_stream(plan.seed, stream_index));
    double p_hat = static_cast<double>(counts[0]) / static_cast<double>(plan.shots_per_point);
    return {p_hat, binomial_se(p_hat, plan.shots_per_point)};
}

inline PointEstimate parity_estimate(const HybridState& state, Mode m, const ShotPlan& plan,
                                     std::uint64_t stream_index) {
    std::vector<double> dist = state.mode_distribution(m);
    double total = 0.0;
    for (double& p : dist) {
        p = std::max(p, 0.0);
        total += p;
    }
    if (total <= 0.0) throw std::runtime_error("parity_estimate: empty mode distribution");
    for (double& p : dist) p /= total;
    if (!plan.sampled) {
        double par = 0.0;
        for (size_t n = 0; n < dist.size(); ++n) par += (n % 2 ? -dist[n] : dist[n]);
        return {par, 0.0};
    }
    auto counts = sample_counts(dist, plan.shots_per_point, derive_stream(plan.seed, stream_index));
    double par = 0.0;
    for (size_t n = 0; n < counts.size(); ++n)
        par += (n % 2 ? -static_cast<double>(counts[n]) : static_cast<double>(counts[n]));
    par /= static_cast<double>(plan.shots_per_point);
    double se = std::sqrt(std::max(1.0 - par * par, 0.0) / static_cast<double>(plan.shots_per_point));
    se = std::max(se, 0.5 / static_cast<double>(plan.shots_per_point));
    return {par, se};
}

inline std::vector<double> phase_grid(int count) {
    if (count < 4) throw std::invalid_argument("phase_grid: need at least 4 phases");
    std::vector<double> g(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k) g[static_cast<size_t>(k)] = 2.0 * pi * k / count;
    return g;
}

// ---------------------------------------------------------------------------
// Input preparation. Noiseless runs start from the ideal closed-form product
// state. Runs with any active noise start from the thermal floor and build the
// requested occupations with physical pulses (alternating blue/red sideband pi
// pulses, closed by a carrier when the ladder leaves the spin excited), so that
// preparation inherits the same imperfections as the gates.

inline std::vector<Step> fock_ladder_steps(int n, Mode m) {
    std::vector<Step> steps;
    for (int k = 0; k < n; ++k)
        steps.push_back(SidebandStep{k % 2 == 0 ? SidebandKind::blue : SidebandKind::red, m});
    if (n % 2 == 1) steps.push_back(RotationStep{pi, 0.0});
    return steps;
}

struct InputPlan {
    HybridState initial;
    std::vector<Step> steps;
};

namespace detail {

// Ideal product state over the modes (spin |g>): per-mode pure amplitudes when
// possible, otherwise a tensor-product density (thermal factors).
inline HybridState product_input(const std::vector<PrepRecipe>& recipes, const ModeLayout& layout) {
    int nm = layout.n_modes();
    std::vector<const PrepRecipe*> per_mode(static_cast<size_t>(nm), nullptr);
    for (const auto& r : recipes) {
        if (!layout.has_mode(r.mode))
            throw std::invalid_argument("product_input: recipe targets a mode outside the layout");
        auto& slot = per_mode[static_cast<size_t>(r.mode)];
        if (slot) throw std::invalid_argument("product_input: two recipes target the same mode");
        slot = &r;
    }
    bool any_mixed = false;
    for (const auto* r : per_mode)
        if (r && r->kind == PrepRecipe::Kind::thermal && r->nbar > 0.0) any_mixed = true;

    if (!any_mixed) {
        std::vector<Vec> factors;
        for (int k = 0; k < nm; ++k) {
            int c = layout.cutoffs[static_cast<size_t>(k)];
            const PrepRecipe* r = per_mode[static_cast<size_t>(k)];
            Vec f = Vec::Zero(c);
            if (!r || (r->kind == PrepRecipe::Kind::thermal)) {
                f(0) = 1.0;
            } else if (r->kind == PrepRecipe::Kind::fock) {
                if (r->n < 0 || r->n >= c) throw std::out_of_range("product_input: Fock n outside cutoff");
                f(r->n) = 1.0;
            } else {
                f = coherent_amplitudes(r->alpha, c);
            }
            factors.push_back(std::move(f));
        }
        Vec v = Vec::Zero(layout.dim());
        std::vector<int> occ(static_cast<size_t>(nm), 0);
        int mode_dim = layout.spin_stride();
        for (int i = 0; i < mode_dim; ++i) {
            int rem = i;
            Cplx amp = 1.0;
            for (int k = nm - 1; k >= 0; --k) {
                int c = layout.cutoffs[static_cast<size_t>(k)];
                occ[static_cast<size_t>(k)] = rem % c;
                rem /= c;
                amp *= factors[static_cast<size_t>(k)](occ[static_cast<size_t>(k)]);
            }
            v(i) = amp;  // spin g block occupies the first spin_stride entries
        }
        return HybridState::pure(layout, std::move(v));
    }

    // Mixed product: per-mode density factors on the spin-g block.
    std::vector<Mat> factors;
    for (int k = 0; k < nm; ++k) {
        int c = layout.cutoffs[static_cast<size_t>(k)];
        const PrepRecipe* r = per_mode[static_cast<size_t>(k)];
        if (r && r->kind == PrepRecipe::Kind::thermal) {
            auto w = thermal_weights(r->nbar, c);
            Mat f = Mat::Zero(c, c);
            for (int n = 0; n < c; ++n) f(n, n) = w[static_cast<size_t>(n)];
            factors.push_back(std::move(f));
        } else {
            Vec f = Vec::Zero(c);
            if (!r) {
                f(0) = 1.0;
            } else if (r->kind == PrepRecipe::Kind::fock) {
                if (r->n < 0 || r->n >= c) throw std::out_of_range("product_input: Fock n outside cutoff");
                f(r->n) = 1.0;
            } else {
                f = coherent_amplitudes(r->alpha, c);
            }
            factors.push_back(f * f.adjoint());
        }
    }
    int mode_dim = layout.spin_stride();
    Mat rho = Mat::Zero(layout.dim(), layout.dim());
    for (int i = 0; i < mode_dim; ++i)
        for (int j = 0; j < mode_dim; ++j) {
            Cplx val = 1.0;
            int ri = i, rj = j;
            for (int k = nm - 1; k >= 0; --k) {
                int c = layout.cutoffs[static_cast<size_t>(k)];
                val *= factors[static_cast<size_t>(k)](ri % c, rj % c);
                ri /= c;
                rj /= c;
            }
            rho(i, j) = val;
        }
    return HybridState::density(layout, std::move(rho));
}

}  // namespace detail

inline InputPlan plan_input(const std::vector<PrepRecipe>& recipes, const ModeLayout& layout,
                            const NoiseParams& noise, bool echoed) {
    if (!noise.any_noise(echoed)) return {detail::product_input(recipes, layout), {}};

    // Thermal floor per mode, overridable by an explicit thermal recipe.
    std::vector<double> nbar(static_cast<size_t>(layout.n_modes()), 0.0);
    if (layout.has_mode(Mode::a)) nbar[0] = noise.nbar_a;
    if (layout.has_mode(Mode::b)) nbar[1] = noise.nbar_b;
    std::vector<Step> steps;
    for (const auto& r : recipes) {
        if (!layout.has_mode(r.mode))
            throw std::invalid_argument("plan_input: recipe targets a mode outside the layout");
        switch (r.kind) {
            case PrepRecipe::Kind::fock:
                for (Step& s : fock_ladder_steps(r.n, r.mode)) steps.push_back(s);
                break;
            case PrepRecipe::Kind::coherent:
                steps.push_back(DisplaceStep{r.alpha, r.mode});
                break;
            case PrepRecipe::Kind::thermal:
                nbar[static_cast<size_t>(r.mode)] = r.nbar;
                break;
        }
    }
    std::vector<PrepRecipe> thermal;
    for (int k = 0; k < layout.n_modes(); ++k)
        thermal.push_back(PrepRecipe::thermal(nbar[static_cast<size_t>(k)], static_cast<Mode>(k)));
    return {detail::product_input(thermal, layout), std::move(steps)};
}

// Rough number of levels a prepared state occupies, used for cutoff sizing.
inline int recipe_levels(const PrepRecipe& r) {
    switch (r.kind) {
        case PrepRecipe::Kind::fock: return r.n;
        case PrepRecipe::Kind::coherent: {
            double am = std::abs(r.alpha);
            return static_cast<int>(std::ceil(am * am + 6.0 * am));
        }
        case PrepRecipe::Kind::thermal: return 2 + static_cast<int>(std::ceil(8.0 * r.nbar));
    }
    throw std::logic_error("recipe_levels: unreachable");
}

// ---------------------------------------------------------------------------
// Swap test: R(pi/2,0), conditional beam splitter (optionally echoed), then
// R(pi/2,phi) swept over phi. Against a Fock reference |m> in the partner mode
// the mapped probability is 1/2 [1 - (-1)^(m+1) cos(phi) |<m|psi>|^2], so the
// fitted contrast estimates the overlap.

inline double swap_test_expected_excited(int reference_n, double overlap_sq, double phi) {
    double sgn = (reference_n % 2 == 0) ? -1.0 : 1.0;  // (-1)^(m+1)
    return 0.5 * (1.0 - sgn * std::cos(phi) * overlap_sq);
}

struct SwapTestConfig {
    PrepRecipe psi = PrepRecipe::fock(0, Mode::a);
    int reference_n = 0;  // Fock reference prepared in mode b
    int phase_count = 24;
    bool echoed = false;
    double xi = default_xi;
    double upsilon = 0.0;
    NoiseParams noise{};
    ShotPlan plan{};
    std::optional<ModeLayout> layout{};
};

struct SwapTestResult {
    std::vector<double> phases;
    std::vector<double> p_mapped;   // excited (plain) or ground (echoed) probability
    std::vector<double> p_excited;  // raw excited-state probability
    std::vector<double> se;
    SinusoidFit fit;
    double overlap_sq = 0.0;
    double overlap_sq_se = 0.0;
    bool echoed = false;
};

inline ModeLayout swap_test_layout(const SwapTestConfig& cfg) {
    if (cfg.layout) return *cfg.layout;
    // The beam splitter transiently concentrates all quanta in one mode, so
    // both cutoffs must hold the total plus a guard band.
    int c = recipe_levels(cfg.psi) + cfg.reference_n + 4;
    c = std::max(c, cfg.reference_n + 2);
    return ModeLayout{c, c};
}

inline SwapTestResult swap_test(const SwapTestConfig& cfg) {
    ModeLayout layout = swap_test_layout(cfg);
    PrepRecipe psi = cfg.psi;
    psi.mode = Mode::a;
    InputPlan input = plan_input({psi, PrepRecipe::fock(cfg.reference_n, Mode::b)}, layout, cfg.noise,
                                 cfg.echoed);
    CbsParams gate;
    gate.xi = cfg.xi;
    gate.upsilon = cfg.upsilon;

    UnitaryCache cache;
    RunOptions opt;
    opt.noise = cfg.noise;
    opt.cache = &cache;

    SwapTestResult res;
    res.echoed = cfg.echoed;
    res.phases = phase_grid(cfg.phase_count);
    for (size_t k = 0; k < res.phases.size(); ++k) {
        Sequence seq;
        seq.echoed = cfg.echoed;
        seq.steps = input.steps;
        seq.steps.push_back(RotationStep{pi / 2.0, 0.0});
        for (Step& s : cbs_segment(gate, cfg.echoed)) seq.steps.push_back(s);
        seq.steps.push_back(RotationStep{pi / 2.0, res.phases[k]});
        HybridState out = run_sequence(input.initial, seq, opt);
        PointEstimate pe = excited_estimate(out, cfg.noise, cfg.plan, k);
        res.p_excited.push_back(pe.value);
        res.p_mapped.push_back(cfg.echoed ? 1.0 - pe.value : pe.value);
        res.se.push_back(pe.se);
    }
    res.fit = fit_sinusoid(res.phases, res.p_mapped, cfg.plan.sampled ? res.se : std::vector<double>{});
    res.overlap_sq = res.fit.contrast;
    res.overlap_sq_se = res.fit.se_contrast;
    return res;
}

// Pairwise overlaps |<n|m>|^2 for Fock states up to n_max, one swap test per cell.
struct OverlapMatrixConfig {
    int n_max = 5;
    int phase_count = 24;
    bool echoed = false;
    double xi = default_xi;
    double upsilon = 0.0;
    NoiseParams noise{};
    ShotPlan plan{};
    std::optional<ModeLayout> layout{};
};

struct OverlapMatrixResult {
    int n_max = 0;
    Eigen::MatrixXd overlap_sq;
    Eigen::MatrixXd overlap_sq_se;
    std::vector<SwapTestResult> cells;  // row-major (n, m)
};

inline OverlapMatrixResult overlap_matrix(const OverlapMatrixConfig& cfg) {
    if (cfg.n_max < 0) throw std::invalid_argument("overlap_matrix: negative n_max");
    OverlapMatrixResult res;
    res.n_max = cfg.n_max;
    int d = cfg.n_max + 1;
    res.overlap_sq.resize(d, d);
    res.overlap_sq_se.resize(d, d);
    for (int n = 0; n <= cfg.n_max; ++n)
        for (int m = 0; m <= cfg.n_max; ++m) {
            SwapTestConfig c;
            c.psi = PrepRecipe::fock(n, Mode::a);
            c.reference_n = m;
            c.phase_count = cfg.phase_count;
            c.echoed = cfg.echoed;
            c.xi = cfg.xi;
            c.upsilon = cfg.upsilon;
            c.noise = cfg.noise;
            c.plan = cfg.plan;
            c.plan.seed = derive_stream(cfg.plan.seed, static_cast<std::uint64_t>(n) * 100 + m);
            c.layout = cfg.layout;
            if (!c.layout) {
                int cc = 2 * cfg.n_max + 4;  // shared sizing keeps cells comparable
                c.layout = ModeLayout{cc, cc};
            }
            SwapTestResult cell = swap_test(c);
            res.overlap_sq(n, m) = cell.overlap_sq;
            res.overlap_sq_se(n, m) = cell.overlap_sq_se;
            res.cells.push_back(std::move(cell));
        }
    return res;
}

// ---------------------------------------------------------------------------
// Coherent-state reconstruction: swap tests against Fock references |m> give
// the number populations, which follow a Poisson law in |alpha|^2.

struct CoherentConfig {
    Cplx alpha{1.0, 0.0};
    int m_max = 8;
    int phase_count = 24;
    bool echoed = false;
    double xi = default_xi;
    double upsilon = 0.0;
    NoiseParams noise{};
    ShotPlan plan = ShotPlan{false, 500, 0};
    std::optional<ModeLayout> layout{};
};

struct CoherentResult {
    std::vector<double> populations;
    std::vector<double> populations_se;
    PoissonFit fit;  // fit.mean estimates |alpha|^2
    std::vector<SwapTestResult> cells;
};

inline CoherentResult reconstruct_coherent(const CoherentConfig& cfg) {
    if (cfg.m_max < 1) throw std::invalid_argument("reconstruct_coherent: m_max must be >= 1");
    CoherentResult res;
    for (int m = 0; m <= cfg.m_max; ++m) {
        SwapTestConfig c;
        c.psi = PrepRecipe::coherent(cfg.alpha, Mode::a);
        c.reference_n = m;
        c.phase_count = cfg.phase_count;
        c.echoed = cfg.echoed;
        c.xi = cfg.xi;
        c.upsilon = cfg.upsilon;
        c.noise = cfg.noise;
        c.plan = cfg.plan;
        c.plan.seed = derive_stream(cfg.plan.seed, static_cast<std::uint64_t>(m));
        c.layout = cfg.layout;
        if (!c.layout) {
            int cc = recipe_levels(c.psi) + cfg.m_max + 4;
            c.layout = ModeLayout{cc, cc};
        }
        SwapTestResult cell = swap_test(c);
        res.populations.push_back(cell.overlap_sq);
        res.populations_se.push_back(cell.overlap_sq_se);
        res.cells.push_back(std::move(cell));
    }
    res.fit = fit_poisson_mean(res.populations,
                               cfg.plan.sampled ? res.populations_se : std::vector<double>{});
    return res;
}

// ---------------------------------------------------------------------------
// Parity gate: R(pi/2,0), U(2 tau), R(pi/2,0) maps the photon-number parity of
// mode a onto the spin. Even parity lands on the excited spin (plain variant)
// or the ground spin (echoed variant). Mode b must start in vacuum for the
// mapping to hold; a populated partner mode is reported as a warning flag.

struct ParityGateConfig {
    PrepRecipe psi = PrepRecipe::fock(0, Mode::a);
    bool echoed = false;
    double xi = default_xi;
    double upsilon = 0.0;
    NoiseParams noise{};
    ShotPlan plan{};
    std::optional<ModeLayout> layout{};
};

struct ParityGateResult {
    double p_ground = 0.0;
    double p_excited = 0.0;
    double se = 0.0;       // standard error on either spin probability
    double p_even = 0.0;   // even-parity probability after undoing the echo relabel
    double parity = 0.0;   // inferred <P> = 2 p_even - 1
    bool partner_populated = false;  // mode b was not in vacuum at the input
};

inline ParityGateResult parity_gate_state(const HybridState& initial, const std::vector<Step>& prep_steps,
                                          const ParityGateConfig& cfg) {
    CbsParams gate;
    gate.xi = cfg.xi;
    gate.upsilon = cfg.upsilon;
    gate.duration = 2.0 * gate.tau();

    Sequence seq;
    seq.echoed = cfg.echoed;
    seq.steps = prep_steps;
    seq.steps.push_back(RotationStep{pi / 2.0, 0.0});
    for (Step& s : cbs_segment(gate, cfg.echoed)) seq.steps.push_back(s);
    seq.steps.push_back(RotationStep{pi / 2.0, 0.0});

    RunOptions opt;
    opt.noise = cfg.noise;
    HybridState out = run_sequence(initial, seq, opt);

    ParityGateResult res;
    auto pb = initial.mode_distribution(Mode::b);
    double vac = pb.empty() ? 0.0 : pb[0];
    res.partner_populated = (1.0 - vac) > 1e-9;
    PointEstimate pe = excited_estimate(out, cfg.noise, cfg.plan, 0);
    res.p_excited = pe.value;
    res.p_ground = 1.0 - pe.value;
    res.se = pe.se;
    res.p_even = cfg.echoed ? res.p_ground : res.p_excited;
    res.parity = 2.0 * res.p_even - 1.0;
    return res;
}

inline ParityGateResult parity_gate(const ParityGateConfig& cfg) {
    ModeLayout layout;
    if (cfg.layout) {
        layout = *cfg.layout;
    } else {
        int c = recipe_levels(cfg.psi) + 4;
        layout = ModeLayout{c, c};
    }
    PrepRecipe psi = cfg.psi;
    psi.mode = Mode::a;
    InputPlan input = plan_input({psi}, layout, cfg.noise, cfg.echoed);
    return parity_gate_state(input.initial, input.steps, cfg);
}

// ---------------------------------------------------------------------------
// Displaced-parity Wigner scan. The state of interest lives in mode a with the
// partner mode in vacuum; each point displaces by -alpha and runs the parity
// gate R(pi/2,0), U(2 tau), R(pi/2,0). Even parity maps to the excited spin
// (plain) or the ground spin (echoed); W = (2/pi)(2 P_even - 1).

struct WignerConfig {
    PrepRecipe state = PrepRecipe::fock(0, Mode::a);
    std::vector<Cplx> alphas;
    bool echoed = false;
    double xi = default_xi;
    double upsilon = 0.0;
    NoiseParams noise{};
    ShotPlan plan = ShotPlan{false, 600, 0};
    std::optional<ModeLayout> layout{};
};

struct WignerScanResult {
    std::vector<WignerPoint> points;  // alpha, W estimate, se
    std::vector<double> p_even;
};

inline ModeLayout wigner_layout(const WignerConfig& cfg) {
    if (cfg.layout) return *cfg.layout;
    double amax = 0.0;
    for (Cplx a : cfg.alphas) amax = std::max(amax, std::abs(a));
    // Displacement pushes population upward; the guard band keeps the
    // truncated-propagator error below 1e-6 across |alpha| <= 2.5.
    int guard = std::max(10, static_cast<int>(std::ceil(amax * amax + 8.0 * amax)) + 6);
    int c = recipe_levels(cfg.state) + guard;
    return ModeLayout{c, c};
}

// Runs the scan on an explicit initial state (2-mode layout, partner mode in
// vacuum). prep-recipe entry point below.
inline WignerScanResult wigner_scan_state(const HybridState& initial, const std::vector<Step>& prep_steps,
                                          const WignerConfig& cfg) {
    if (cfg.alphas.empty()) throw std::invalid_argument("wigner_scan: empty alpha grid");
    CbsParams gate;
    gate.xi = cfg.xi;
    gate.upsilon = cfg.upsilon;
    gate.duration = 2.0 * gate.tau();

    UnitaryCache cache;
    RunOptions opt;
    opt.noise = cfg.noise;
    opt.cache = &cache;

    WignerScanResult res;
    for (size_t k = 0; k < cfg.alphas.size(); ++k) {
        Sequence seq;
        seq.echoed = cfg.echoed;
        seq.steps = prep_steps;
        seq.steps.push_back(DisplaceStep{-cfg.alphas[k], Mode::a});
        seq.steps.push_back(RotationStep{pi / 2.0, 0.0});
        for (Step& s : cbs_segment(gate, cfg.echoed)) seq.steps.push_back(s);
        seq.steps.push_back(RotationStep{pi / 2.0, 0.0});
        HybridState out = run_sequence(initial, seq, opt);
        PointEstimate pe = excited_estimate(out, cfg.noise, cfg.plan, k);
        double p_even = cfg.echoed ? 1.0 - pe.value : pe.value;
        res.p_even.push_back(p_even);
        WignerPoint pt;
        pt.alpha = cfg.alphas[k];
        pt.w = (2.0 / pi) * (2.0 * p_even - 1.0);
        pt.se = (4.0 / pi) * pe.se;
        pt.leakage = out.leakage();
        pt.flagged = pt.leakage > 1e-4;
        res.points.push_back(pt);
    }
    return res;
}

inline WignerScanResult wigner_scan(const WignerConfig& cfg) {
    ModeLayout layout = wigner_layout(cfg);
    PrepRecipe state = cfg.state;
    state.mode = Mode::a;
    InputPlan input = plan_input({state}, layout, cfg.noise, cfg.echoed);
    return wigner_scan_state(input.initial, input.steps, cfg);
}

// ---------------------------------------------------------------------------
// NOON generation: R(pi/2,0), CBS, R(pi/2, phi_n), CBS, R(pi/2,0) applied to
// |g, n, 0>, with phi_n = 0 for odd n and pi/2 for even n.

struct NoonConfig {
    int n = 1;
    bool echoed = false;
    double xi = default_xi;
    double upsilon = 0.0;
    NoiseParams noise{};
    std::optional<ModeLayout> layout{};
    // Manual override of the middle-rotation phase. The parity-matched value
    // (0 for odd n, pi/2 for even n) is chosen automatically when unset; a
    // mismatched override is honoured but produces a non-NOON output.
    std::optional<double> mixer_phase{};
};

inline double noon_mixer_phase(int n) { return (n % 2 == 1) ? 0.0 : pi / 2.0; }

inline ModeLayout noon_layout(const NoonConfig& cfg) {
    if (cfg.layout) return *cfg.layout;
    int c = cfg.n + 4;
    return ModeLayout{c, c};
}

inline HybridState generate_noon(const NoonConfig& cfg) {
    if (cfg.n < 1) throw std::invalid_argument("generate_noon: n must be >= 1");
    ModeLayout layout = noon_layout(cfg);
    InputPlan input = plan_input({PrepRecipe::fock(cfg.n, Mode::a)}, layout, cfg.noise, cfg.echoed);
    CbsParams gate;
    gate.xi = cfg.xi;
    gate.upsilon = cfg.upsilon;

    double mixer = noon_mixer_phase(cfg.n);
    if (cfg.mixer_phase) {
        if (std::abs(*cfg.mixer_phase - mixer) > 1e-12)
            std::cerr << "warning: mixer phase " << *cfg.mixer_phase << " does not match the parity of n="
                      << cfg.n << "; output will not be a NOON state\n";
        mixer = *cfg.mixer_phase;
    }

    Sequence seq;
    seq.echoed = cfg.echoed;
    seq.steps = input.steps;
    seq.steps.push_back(RotationStep{pi / 2.0, 0.0});
    for (Step& s : cbs_segment(gate, cfg.echoed)) seq.steps.push_back(s);
    seq.steps.push_back(RotationStep{pi / 2.0, mixer});
    for (Step& s : cbs_segment(gate, cfg.echoed)) seq.steps.push_back(s);
    seq.steps.push_back(RotationStep{pi / 2.0, 0.0});

    RunOptions opt;
    opt.noise = cfg.noise;
    return run_sequence(input.initial, seq, opt);
}

// Ideal output of the generation sequence (including its spin factor and mode
// phases), for fidelity checks against the full simulated state.
inline HybridState noon_reference(int n, bool echoed, const ModeLayout& layout) {
    if (n < 1 || n >= layout.cutoff(Mode::a) || n >= layout.cutoff(Mode::b))
        throw std::out_of_range("noon_reference: n outside layout cutoffs");
    const double inv = 1.0 / std::sqrt(2.0);
    Cplx phase_n0, phase_0n;
    Spin spin = Spin::g;
    Cplx mi = detail::minus_i_pow(n);
    if (!echoed) {
        if (n % 2 == 1) {
            spin = Spin::g;
            phase_n0 = inv;
            phase_0n = -inv * mi;
        } else {
            spin = Spin::e;
            phase_n0 = Cplx(0.0, -1.0) * inv;
            phase_0n = inv * mi;
        }
    } else {
        if (n % 2 == 1) {
            spin = Spin::e;
            phase_n0 = Cplx(0.0, 1.0) * inv;
            phase_0n = Cplx(0.0, -1.0) * inv * mi;
        } else {
            spin = Spin::e;
            phase_n0 = Cplx(0.0, 1.0) * inv;
            phase_0n = inv * mi;
        }
    }
    Vec v = Vec::Zero(layout.dim());
    v(layout.basis_index(spin, {n, 0})) = phase_n0;
    v(layout.basis_index(spin, {0, n})) = phase_0n;
    return HybridState::pure(layout, std::move(v));
}

// Fidelity <ref|rho|ref> against a pure reference.
inline double fidelity_to_pure(const HybridState& state, const HybridState& reference) {
    require_same_layout(state.layout(), reference.layout(), "fidelity_to_pure");
    if (!reference.is_pure()) throw std::invalid_argument("fidelity_to_pure: reference must be pure");
    const Vec& r = reference.amplitudes();
    if (state.is_pure()) return std::norm(r.dot(state.amplitudes()));
    return std::real(r.dot(state.rho() * r));
}

struct NoonMetrics {
    double p_n0 = 0.0;
    double p_0n = 0.0;
    double coherence = 0.0;  // |rho_{n0,0n}| of the two-mode reduced state
    double fidelity = 0.0;   // (p_n0 + p_0n)/2 + coherence
    double fisher = 0.0;     // n^2 (2 coherence)^2 / (p_n0 + p_0n)
};

inline double noon_fisher(int n, double pair_population, double coherence) {
    if (pair_population <= 0.0)
        throw std::runtime_error("noon_fisher: pair population vanishes, Fisher information undefined");
    double num = static_cast<double>(n) * static_cast<double>(n) * (2.0 * coherence) * (2.0 * coherence);
    return num / pair_population;
}

inline NoonMetrics noon_state_metrics(const HybridState& state, int n) {
    const ModeLayout& layout = state.layout();
    if (n < 1 || n >= layout.cutoff(Mode::a) || n >= layout.cutoff(Mode::b))
        throw std::out_of_range("noon_state_metrics: n outside layout cutoffs");
    ReducedState red = partial_trace(state, {subsystem_of(Mode::a), subsystem_of(Mode::b)});
    int cb = layout.cutoff(Mode::b);
    int i_n0 = n * cb;
    int i_0n = n;
    NoonMetrics m;
    m.p_n0 = std::real(red.rho(i_n0, i_n0));
    m.p_0n = std::real(red.rho(i_0n, i_0n));
    m.coherence = std::abs(red.rho(i_n0, i_0n));
    m.fidelity = 0.5 * (m.p_n0 + m.p_0n) + m.coherence;
    m.fisher = noon_fisher(n, m.p_n0 + m.p_0n, m.coherence);
    return m;
}

// ---------------------------------------------------------------------------
// NOON tomography, diagonal part: drive the joint two-mode sideband
// H = (omega0/2)(a^dag b^dag sigma_+ + a b sigma_-) and fit the spin signal
// 1 - 2 P_e(t) with cosines at sqrt(d+1) omega0, where states |n_a, n_b>
// oscillate with d = n_a n_b + n_a + n_b. The NOON pair contributes at d = n.

struct JsbProbeConfig {
    double omega0 = 2.0 * pi * 5e3;  // rad/s
    double t_span = -1.0;            // s; negative means four base periods
    int points = 160;
    int d_max = 8;
    NoiseParams noise{};
    ShotPlan plan{};
};

struct NoonDiagonalsResult {
    std::vector<double> times;
    std::vector<double> p_excited;
    std::vector<double> se;
    std::vector<int> d_values;
    std::vector<double> amplitudes;
    std::vector<double> amplitudes_se;
    double constant = 0.0;
    double pair_population = 0.0;  // P_{n0} + P_{0n} estimate at d = n
    double pair_population_se = 0.0;
    double degeneracy_correction = 0.0;
};

namespace detail {

// All distinct oscillation classes d = n_a n_b + n_a + n_b reachable in the
// layout (only pairs whose raised partner also fits are driven).
inline std::vector<int> jsb_d_values(const ModeLayout& layout, int d_max) {
    std::vector<int> ds;
    for (int na = 0; na + 1 < layout.cutoff(Mode::a); ++na)
        for (int nb = 0; nb + 1 < layout.cutoff(Mode::b); ++nb) {
            int d = na * nb + na + nb;
            if (d <= d_max && std::find(ds.begin(), ds.end(), d) == ds.end()) ds.push_back(d);
        }
    std::sort(ds.begin(), ds.end());
    return ds;
}

}  // namespace detail

inline NoonDiagonalsResult noon_diagonals(const HybridState& state, int n, const JsbProbeConfig& cfg) {
    const ModeLayout& layout = state.layout();
    if (layout.n_modes() < 2) throw std::invalid_argument("noon_diagonals: need two modes");
    JointSidebandParams jsb;
    jsb.omega0 = cfg.omega0;
    jsb.validate(layout);
    double base_period = 2.0 * pi / cfg.omega0;
    double span = cfg.t_span > 0.0 ? cfg.t_span : 4.0 * base_period;
    if (span < 3.0 * base_period)
        throw std::invalid_argument("noon_diagonals: probe span shorter than three base periods "
                                    "cannot resolve the frequency comb");
    if (cfg.points < 8) throw std::invalid_argument("noon_diagonals: need at least 8 probe points");

    // Point the spin at |g> so the pair signal starts in the bright branch.
    HybridState probe_input = state;
    auto spin = probe_input.spin_distribution();
    if (spin[1] > spin[0]) probe_input = apply(carrier_pi(layout), probe_input);

    NoonDiagonalsResult res;
    for (int i = 0; i < cfg.points; ++i)
        res.times.push_back(span * static_cast<double>(i) / static_cast<double>(cfg.points - 1));

    LinearOperator h = joint_sideband_h(jsb, layout);
    if (cfg.noise.any_jump(false)) {
        HybridState rho = probe_input.as_density();
        double t_prev = 0.0;
        for (size_t i = 0; i < res.times.size(); ++i) {
            rho = lindblad_evolve(rho, h, res.times[i] - t_prev, cfg.noise, false);
            t_prev = res.times[i];
            PointEstimate pe = excited_estimate(rho, cfg.noise, cfg.plan, i);
            res.p_excited.push_back(pe.value);
            res.se.push_back(pe.se);
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Mat> es(h.mat);
        const Mat& vmat = es.eigenvectors();
        const Eigen::VectorXd& lam = es.eigenvalues();
        if (probe_input.is_pure()) {
            Vec w = vmat.adjoint() * probe_input.amplitudes();
            for (size_t i = 0; i < res.times.size(); ++i) {
                Vec phase(w.size());
                for (int k = 0; k < w.size(); ++k)
                    phase(k) = std::polar(1.0, -lam(k) * res.times[i]) * w(k);
                Vec psi_t = vmat * phase;
                HybridState st = HybridState::pure(layout, std::move(psi_t));
                PointEstimate pe = excited_estimate(st, cfg.noise, cfg.plan, i);
                res.p_excited.push_back(pe.value);
                res.se.push_back(pe.se);
            }
        } else {
            Mat r = vmat.adjoint() * probe_input.rho() * vmat;
            for (size_t i = 0; i < res.times.size(); ++i) {
                Mat rt = r;
                for (int a = 0; a < rt.rows(); ++a)
                    for (int b = 0; b < rt.cols(); ++b)
                        rt(a, b) *= std::polar(1.0, -(lam(a) - lam(b)) * res.times[i]);
                Mat rho_t = vmat * rt * vmat.adjoint();
                HybridState st = HybridState::density(layout, std::move(rho_t));
                PointEstimate pe = excited_estimate(st, cfg.noise, cfg.plan, i);
                res.p_excited.push_back(pe.value);
                res.se.push_back(pe.se);
            }
        }
    }

    res.d_values = detail::jsb_d_values(layout, cfg.d_max);
    int ncol = static_cast<int>(res.d_values.size()) + 1;
    Eigen::MatrixXd design(cfg.points, ncol);
    Eigen::VectorXd rhs(cfg.points);
    for (int i = 0; i < cfg.points; ++i) {
        double wi = cfg.plan.sampled ? 1.0 / res.se[static_cast<size_t>(i)] : 1.0;
        design(i, 0) = wi;
        for (int c = 0; c < ncol - 1; ++c) {
            double omega = std::sqrt(res.d_values[static_cast<size_t>(c)] + 1.0) * cfg.omega0;
            design(i, c + 1) = wi * std::cos(omega * res.times[static_cast<size_t>(i)]);
        }
        rhs(i) = wi * (1.0 - 2.0 * res.p_excited[static_cast<size_t>(i)]);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double cond = svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
    if (!std::isfinite(cond) || cond > 1e8)
        throw std::runtime_error("noon_diagonals: frequency comb unresolvable on this grid "
                                 "(condition number " + std::to_string(cond) + ")");
    Eigen::VectorXd beta = svd.solve(rhs);
    Eigen::MatrixXd cov = (design.transpose() * design).inverse();
    if (!cfg.plan.sampled) {
        double ssr = (design * beta - rhs).squaredNorm();
        int dof = std::max(1, cfg.points - ncol);
        cov *= ssr / static_cast<double>(dof);
    }

    res.constant = beta(0);
    for (int c = 0; c < ncol - 1; ++c) {
        res.amplitudes.push_back(beta(c + 1));
        res.amplitudes_se.push_back(std::sqrt(std::max(0.0, cov(c + 1, c + 1))));
    }

    auto it = std::find(res.d_values.begin(), res.d_values.end(), n);
    if (it == res.d_values.end())
        throw std::invalid_argument("noon_diagonals: d = n not reachable in this layout/d_max");
    size_t idx = static_cast<size_t>(it - res.d_values.begin());
    res.pair_population = res.amplitudes[idx];
    res.pair_population_se = res.amplitudes_se[idx];

    // Interior pairs (n_a, n_b >= 1) with (n_a+1)(n_b+1) = n+1 oscillate at the
    // same frequency as the NOON pair; subtract a conservative bound on their
    // population from the single-mode marginals of the probed state.
    auto marg_a = probe_input.mode_distribution(Mode::a);
    auto marg_b = probe_input.mode_distribution(Mode::b);
    double corr = 0.0;
    for (int na = 1; na + 1 < layout.cutoff(Mode::a); ++na)
        for (int nb = 1; nb + 1 < layout.cutoff(Mode::b); ++nb)
            if ((na + 1) * (nb + 1) == n + 1)
                corr += std::min(marg_a[static_cast<size_t>(na)], marg_b[static_cast<size_t>(nb)]);
    res.degeneracy_correction = corr;
    res.pair_population = std::max(0.0, res.pair_population - corr);
    return res;
}

// ---------------------------------------------------------------------------
// NOON tomography, off-diagonal part: point the spin at |e>, apply a 50:50
// conditional beam splitter with swept phase upsilon, and read the parity of
// each mode. The parity oscillates with period 2 pi / n and amplitude
// 2 |rho_{n0,0n}|.

struct NoonOffdiagConfig {
    int phase_count = 12;  // >= 5
    double xi = default_xi;
    NoiseParams noise{};
    ShotPlan plan{};
};

struct NoonOffdiagResult {
    std::vector<double> upsilons;
    std::vector<double> parity_a;
    std::vector<double> parity_b;
    std::vector<double> se_a;
    std::vector<double> se_b;
    SinusoidFit fit_a;
    SinusoidFit fit_b;
    double coherence = 0.0;
    double coherence_se = 0.0;
};

inline NoonOffdiagResult noon_offdiagonals(const HybridState& state, int n, const NoonOffdiagConfig& cfg) {
    const ModeLayout& layout = state.layout();
    if (layout.n_modes() < 2) throw std::invalid_argument("noon_offdiagonals: need two modes");
    if (cfg.phase_count < 5)
        throw std::invalid_argument("noon_offdiagonals: need at least 5 beam-splitter phases");
    if (n < 1) throw std::invalid_argument("noon_offdiagonals: n must be >= 1");

    UnitaryCache cache;
    RunOptions opt;
    opt.noise = cfg.noise;
    opt.cache = &cache;

    NoonOffdiagResult res;
    res.upsilons = phase_grid(cfg.phase_count);
    std::vector<double> scaled;
    for (size_t k = 0; k < res.upsilons.size(); ++k) {
        CbsParams half;
        half.xi = cfg.xi;
        half.upsilon = res.upsilons[k];
        half.duration = half.tau() / 2.0;  // 50:50 splitter
        Sequence seq;
        // With the spin pointed at |e> the conditional coupling acts as a
        // plain beam splitter; model that directly so residual population in
        // the other spin branch is mixed in rather than frozen.
        seq.steps = {CbsStep{half, /*conditional=*/false}};
        HybridState out = run_sequence(state, seq, opt);
        PointEstimate pa = parity_estimate(out, Mode::a, cfg.plan, 2 * k);
        PointEstimate pb = parity_estimate(out, Mode::b, cfg.plan, 2 * k + 1);
        res.parity_a.push_back(pa.value);
        res.parity_b.push_back(pb.value);
        res.se_a.push_back(pa.se);
        res.se_b.push_back(pb.se);
        scaled.push_back(static_cast<double>(n) * res.upsilons[k]);
    }
    res.fit_a = fit_sinusoid(scaled, res.parity_a, cfg.plan.sampled ? res.se_a : std::vector<double>{});
    res.fit_b = fit_sinusoid(scaled, res.parity_b, cfg.plan.sampled ? res.se_b : std::vector<double>{});
    // Peak-to-peak parity contrast is 4 |rho|; average the two mode estimates.
    res.coherence = 0.125 * (res.fit_a.contrast + res.fit_b.contrast);
    res.coherence_se = 0.125 * std::hypot(res.fit_a.se_contrast, res.fit_b.se_contrast);
    return res;
}

// Combined tomography estimate of the NOON quality figures.
struct NoonTomographyResult {
    NoonDiagonalsResult diagonals;
    NoonOffdiagResult offdiagonals;
    double fidelity = 0.0;
    double fisher = 0.0;
};

inline NoonTomographyResult noon_tomography(const HybridState& state, int n, const JsbProbeConfig& dia,
                                            const NoonOffdiagConfig& off) {
    NoonTomographyResult res;
    res.diagonals = noon_diagonals(state, n, dia);
    res.offdiagonals = noon_offdiagonals(state, n, off);
    res.fidelity = 0.5 * res.diagonals.pair_population + res.offdiagonals.coherence;
    res.fisher = noon_fisher(n, res.diagonals.pair_population, res.offdiagonals.coherence);
    return res;
}

// ---------------------------------------------------------------------------
// Fredkin truth table. Inputs span spin x {0,1} x {0,1}; the conditional beam
// splitter swaps the modes exactly when the spin is excited. Readout chains
// measure (spin, n_a > 0, n_b > 0) by projecting onto the dark |g> state after
// mapping the queried answer onto it, one binary question at a time; the eight
// chains partition unity.

struct FredkinConfig {
    bool echoed = false;
    double xi = default_xi;
    double upsilon = 0.0;
    NoiseParams noise{};
    ShotPlan plan = ShotPlan{false, 10000, 0};
    std::optional<ModeLayout> layout{};
};

struct FredkinResult {
    std::vector<std::string> labels;  // inputs and outcomes share labels, e.g. "e10"
    Eigen::MatrixXd table;            // row: input, column: measured outcome
    Eigen::MatrixXd table_se;
    double success = 0.0;
    double success_se = 0.0;
};

namespace detail {

// Unnormalized dark-branch update: with detection error eps the reported-dark
// state is (1-eps) P_g rho P_g + eps P_e rho P_e.
inline HybridState keep_dark(const HybridState& state, double eps) {
    const ModeLayout& layout = state.layout();
    int half = layout.spin_stride();
    if (state.is_pure() && eps == 0.0) {
        Vec v = state.amplitudes();
        v.tail(half).setZero();
        return HybridState::pure(layout, std::move(v));
    }
    Mat rho = state.is_pure() ? Mat(state.amplitudes() * state.amplitudes().adjoint()) : state.rho();
    Mat out = Mat::Zero(rho.rows(), rho.cols());
    out.topLeftCorner(half, half) = (1.0 - eps) * rho.topLeftCorner(half, half);
    out.bottomRightCorner(half, half) += eps * rho.bottomRightCorner(half, half);
    return HybridState::density(layout, std::move(out));
}

}  // namespace detail

inline int fredkin_ideal_outcome(int input) {
    int s = input >> 2, na = (input >> 1) & 1, nb = input & 1;
    return s == 0 ? input : (s << 2) | (nb << 1) | na;
}

inline std::string fredkin_label(int idx) {
    int s = idx >> 2;
    return std::string(1, s == 0 ? 'g' : 'e') + std::to_string((idx >> 1) & 1) + std::to_string(idx & 1);
}

inline FredkinResult fredkin_table(const FredkinConfig& cfg) {
    ModeLayout layout = cfg.layout ? *cfg.layout : ModeLayout{6, 6};
    CbsParams gate;
    gate.xi = cfg.xi;
    gate.upsilon = cfg.upsilon;

    UnitaryCache cache;
    RunOptions opt;
    opt.noise = cfg.noise;
    opt.cache = &cache;

    LinearOperator carrier = carrier_pi(layout);
    LinearOperator rsb_a = sideband_pi(SidebandKind::red, Mode::a, layout);
    LinearOperator rsb_b = sideband_pi(SidebandKind::red, Mode::b, layout);
    double eps = cfg.noise.detect_err;

    FredkinResult res;
    res.table.resize(8, 8);
    res.table_se.resize(8, 8);
    for (int i = 0; i < 8; ++i) res.labels.push_back(fredkin_label(i));

    for (int input = 0; input < 8; ++input) {
        int s = input >> 2, na = (input >> 1) & 1, nb = input & 1;
        InputPlan in = plan_input({PrepRecipe::fock(na, Mode::a), PrepRecipe::fock(nb, Mode::b)}, layout,
                                  cfg.noise, cfg.echoed);
        Sequence seq;
        seq.echoed = cfg.echoed;
        seq.steps = in.steps;
        if (s == 1) seq.steps.push_back(RotationStep{pi, 0.0});
        for (Step& st : cbs_segment(gate, cfg.echoed)) seq.steps.push_back(st);
        HybridState after = run_sequence(in.initial, seq, opt);

        for (int outcome = 0; outcome < 8; ++outcome) {
            int so = outcome >> 2, ta = (outcome >> 1) & 1, tb = outcome & 1;
            HybridState chain = after;
            if (so == 1) chain = apply(carrier, chain);
            chain = detail::keep_dark(chain, eps);
            chain = apply(rsb_a, chain);
            if (ta == 1) chain = apply(carrier, chain);
            chain = detail::keep_dark(chain, eps);
            chain = apply(rsb_b, chain);
            if (tb == 1) chain = apply(carrier, chain);
            chain = detail::keep_dark(chain, eps);
            double p = std::clamp(chain.weight(), 0.0, 1.0);
            if (cfg.plan.sampled) {
                auto counts = sample_counts({p, 1.0 - p}, cfg.plan.shots_per_point,
                                            derive_stream(cfg.plan.seed,
                                                          static_cast<std::uint64_t>(input) * 8 + outcome));
                double p_hat = static_cast<double>(counts[0]) / static_cast<double>(cfg.plan.shots_per_point);
                res.table(input, outcome) = p_hat;
                res.table_se(input, outcome) = binomial_se(p_hat, cfg.plan.shots_per_point);
            } else {
                res.table(input, outcome) = p;
                res.table_se(input, outcome) = 0.0;
            }
        }
    }

    double acc = 0.0, var = 0.0;
    for (int input = 0; input < 8; ++input) {
        int ideal = fredkin_ideal_outcome(input);
        acc += res.table(input, ideal);
        var += res.table_se(input, ideal) * res.table_se(input, ideal);
    }
    res.success = acc / 8.0;
    res.success_se = std::sqrt(var) / 8.0;
    return res;
}

}  // namespace cbsim
