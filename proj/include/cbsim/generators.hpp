#pragma once
// Gate generators and unitaries for the conditional-beam-splitter (CBS) toolbox.
//
// The CBS Hamiltonian H/hbar = xi |e><e| (a^dag b e^{i upsilon} + a b^dag e^{-i upsilon})
// exchanges the two modes only when the spin is excited. At integer multiples of
// the gate time tau = pi/(2 xi) its action on Fock states has a closed form
// (a phased mode swap on the excited branch), which is the fast path used by the
// protocols; the Hermitian-eigendecomposition matrix exponential provides the
// independent second route and doubles as the test oracle.

#include "fock.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

namespace cbsim {

inline constexpr double pi = std::numbers::pi_v<double>;

// Defaults chosen so that the full CBS gate takes 400 us.
inline constexpr double default_gate_time = 400e-6;           // s
inline constexpr double default_xi = pi / (2 * default_gate_time);  // rad/s

struct CbsParams {
    double xi = default_xi;    // coupling strength, rad/s
    double upsilon = 0.0;      // absolute beam-splitter phase
    Mode mode1 = Mode::a;
    Mode mode2 = Mode::b;
    double duration = -1.0;    // s; negative means one gate time tau = pi/(2 xi)

    double tau() const { return pi / (2.0 * xi); }
    double time() const { return duration < 0.0 ? tau() : duration; }

    void validate(const ModeLayout& layout) const {
        if (xi <= 0.0) throw std::invalid_argument("CbsParams: xi must be positive");
        if (mode1 == mode2)
            throw std::invalid_argument("CbsParams: the two beam-splitter modes must differ");
        if (!layout.has_mode(mode1) || !layout.has_mode(mode2))
            throw std::invalid_argument("CbsParams: modes " + std::string(1, mode_name(mode1)) +
                                        std::string(1, mode_name(mode2)) + " not present in layout " +
                                        layout.describe());
    }
};

// H/hbar of the bare (unconditioned) beam splitter between two modes.
inline LinearOperator h_bs(const CbsParams& p, const ModeLayout& layout) {
    p.validate(layout);
    Mat ad_b = creation(layout, p.mode1).mat * annihilation(layout, p.mode2).mat;
    Cplx phase = std::polar(1.0, p.upsilon);
    Mat h = p.xi * (phase * ad_b + std::conj(phase) * ad_b.adjoint());
    return LinearOperator(layout, std::move(h), OperatorUnit::angular_frequency);
}

// H/hbar of the conditional beam splitter: the same coupling gated by |e><e|.
inline LinearOperator h_cbs(const CbsParams& p, const ModeLayout& layout) {
    LinearOperator bare = h_bs(p, layout);
    Mat h = excited_projector(layout).mat * bare.mat;  // projector commutes with the mode coupling
    return LinearOperator(layout, std::move(h), OperatorUnit::angular_frequency);
}

// exp(-i H t) for a Hermitian operator in angular-frequency units, via
// eigendecomposition. This is the oracle route for every analytic fast path.
inline LinearOperator hermitian_expm(const LinearOperator& h, double t) {
    if (h.unit != OperatorUnit::angular_frequency)
        throw std::invalid_argument("hermitian_expm: operator is not a Hamiltonian (angular frequency)");
    if (!h.is_hermitian())
        throw std::invalid_argument("hermitian_expm: operator is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> es(h.mat);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("hermitian_expm: eigendecomposition failed");
    Vec phases(h.mat.rows());
    for (int i = 0; i < h.mat.rows(); ++i)
        phases(i) = std::polar(1.0, -es.eigenvalues()(i) * t);
    Mat u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    return LinearOperator(h.layout, std::move(u), OperatorUnit::dimensionless);
}

namespace detail {

// i^(-k) table: (-i)^k for k >= 0.
inline Cplx minus_i_pow(int k) {
    switch (((k % 4) + 4) % 4) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, -1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, 1.0};
    }
}

// Is t a positive integer multiple of tau (within 1e-9 relative)?
inline std::optional<int> tau_multiple(double t, double tau) {
    if (t < 0.0) return std::nullopt;
    double k = t / tau;
    int ki = static_cast<int>(std::lround(k));
    if (ki >= 0 && std::abs(k - ki) <= 1e-9 * std::max(1.0, k)) return ki;
    return std::nullopt;
}

// One application of the closed-form full-gate action on an amplitude vector:
// |n,m> -> (-i)^(n+m) e^{i (m-n) upsilon} |m,n>, restricted to the excited spin
// branch when conditioned. Exact for the untruncated dynamics; on the truncated
// space it coincides with the matrix exponential wherever the total-quanta
// chain n+m fits below the cutoff.
inline void apply_swap_phase_once(Vec& v, const ModeLayout& layout, Mode m1, Mode m2,
                                  double upsilon, bool conditioned) {
    Vec out = Vec::Zero(v.size());
    int c1 = layout.cutoff(m1), c2 = layout.cutoff(m2);
    for (int i = 0; i < v.size(); ++i) {
        if (v(i) == Cplx(0.0, 0.0)) continue;
        auto ket = layout.basis_decode(i);
        int n = ket.occ[static_cast<size_t>(m1)];
        int m = ket.occ[static_cast<size_t>(m2)];
        if (conditioned && ket.spin == Spin::g) {
            out(i) += v(i);
            continue;
        }
        if (n >= c2 || m >= c1)
            throw std::out_of_range("cbs fast path: swapped occupation exceeds the partner cutoff");
        auto swapped = ket;
        swapped.occ[static_cast<size_t>(m1)] = m;
        swapped.occ[static_cast<size_t>(m2)] = n;
        std::vector<int> occ(swapped.occ.begin(), swapped.occ.begin() + layout.n_modes());
        int j = layout.basis_index(swapped.spin, occ);
        Cplx phase = minus_i_pow(n + m);
        if (upsilon != 0.0) phase *= std::polar(1.0, (m - n) * upsilon);
        out(j) += phase * v(i);
    }
    v = std::move(out);
}

inline Mat swap_phase_matrix(const ModeLayout& layout, Mode m1, Mode m2, double upsilon,
                             bool conditioned, int k) {
    int d = layout.dim();
    Mat u = Mat::Zero(d, d);
    for (int col = 0; col < d; ++col) {
        Vec v = Vec::Zero(d);
        v(col) = 1.0;
        for (int rep = 0; rep < k; ++rep)
            apply_swap_phase_once(v, layout, m1, m2, upsilon, conditioned);
        u.col(col) = v;
    }
    return u;
}

}  // namespace detail

enum class CbsRoute {
    automatic,   // closed form at integer multiples of tau, exponential otherwise
    matrix_exp,  // always the eigendecomposition exponential
};

// Unconditioned beam-splitter unitary.
// The closed-form full-gate matrix exists only when the swapped pair shares a
// cutoff (otherwise some columns would map outside the truncation).
inline bool swap_phase_applicable(const CbsParams& p, const ModeLayout& layout) {
    return layout.cutoff(p.mode1) == layout.cutoff(p.mode2);
}

inline LinearOperator u_bs(const CbsParams& p, const ModeLayout& layout,
                           CbsRoute route = CbsRoute::automatic) {
    p.validate(layout);
    if (route == CbsRoute::automatic && swap_phase_applicable(p, layout)) {
        if (auto k = detail::tau_multiple(p.time(), p.tau()))
            return LinearOperator(layout,
                                  detail::swap_phase_matrix(layout, p.mode1, p.mode2, p.upsilon, false, *k));
    }
    return hermitian_expm(h_bs(p, layout), p.time());
}

// Conditional beam-splitter unitary (identity on the |g> branch).
inline LinearOperator u_cbs(const CbsParams& p, const ModeLayout& layout,
                            CbsRoute route = CbsRoute::automatic) {
    p.validate(layout);
    if (route == CbsRoute::automatic && swap_phase_applicable(p, layout)) {
        if (auto k = detail::tau_multiple(p.time(), p.tau()))
            return LinearOperator(layout,
                                  detail::swap_phase_matrix(layout, p.mode1, p.mode2, p.upsilon, true, *k));
    }
    return hermitian_expm(h_cbs(p, layout), p.time());
}

// Spin rotation R(theta, phi) acting as identity on the modes:
//   [ cos(theta/2)              -i sin(theta/2) e^{-i phi} ]
//   [ -i sin(theta/2) e^{i phi}  cos(theta/2)              ]
inline Eigen::Matrix2cd spin_rotation_matrix(double theta, double phi) {
    Eigen::Matrix2cd r;
    Cplx ms = Cplx(0.0, -1.0) * std::sin(theta / 2.0);
    r << std::cos(theta / 2.0), ms * std::polar(1.0, -phi),
         ms * std::polar(1.0, phi), std::cos(theta / 2.0);
    return r;
}

inline LinearOperator spin_rotation(double theta, double phi, const ModeLayout& layout) {
    return spin_operator(layout, spin_rotation_matrix(theta, phi));
}

inline LinearOperator carrier_pi(const ModeLayout& layout) { return spin_rotation(pi, 0.0, layout); }

// Single-mode displacement D(alpha) = exp(alpha a^dag - alpha* a), computed by
// eigendecomposition of the Hermitian generator i(alpha a^dag - alpha* a) on the
// single-mode factor and embedded into the full layout.
inline Mat displacement_factor(Cplx alpha, int cutoff) {
    Mat a = Mat::Zero(cutoff, cutoff);
    for (int n = 1; n < cutoff; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    Mat k = Cplx(0.0, 1.0) * (alpha * a.adjoint() - std::conj(alpha) * a);
    Eigen::SelfAdjointEigenSolver<Mat> es(k);
    Vec phases(cutoff);
    for (int i = 0; i < cutoff; ++i) phases(i) = std::polar(1.0, -es.eigenvalues()(i));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

inline LinearOperator mode_operator(const ModeLayout& layout, Mode m, const Mat& factor) {
    if (!layout.has_mode(m))
        throw std::invalid_argument(std::string("mode_operator: mode ") + mode_name(m) +
                                    " not present in layout " + layout.describe());
    int cut = layout.cutoff(m);
    if (factor.rows() != cut || factor.cols() != cut)
        throw std::invalid_argument("mode_operator: factor dimension does not match the mode cutoff");
    int d = layout.dim();
    int stride = layout.stride(m);
    Mat full = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        auto ket = layout.basis_decode(i);
        int n = ket.occ[static_cast<size_t>(m)];
        int base = i - n * stride;
        for (int np = 0; np < cut; ++np) {
            Cplx x = factor(np, n);
            if (x != Cplx(0.0, 0.0)) full(base + np * stride, i) = x;
        }
    }
    return LinearOperator(layout, std::move(full));
}

inline LinearOperator displacement(Cplx alpha, Mode m, const ModeLayout& layout) {
    return mode_operator(layout, m, displacement_factor(alpha, layout.cutoff(m)));
}

// Sideband pi-pulses with the -i pulse phases kept explicitly.
//  blue: couples |g,n> <-> |e,n+1>; pi-pulse maps |g,n> -> -i|e,n+1>, |e,n+1> -> -i|g,n>.
//  red:  couples |g,n+1> <-> |e,n>; pi-pulse maps |g,n+1> -> -i|e,n>, |e,n> -> -i|g,n+1>.
// Fock levels without a partner inside the cutoff (and |g,0> for red, |e,0> for
// blue) are left untouched.
enum class SidebandKind { blue, red };

inline LinearOperator sideband_pi(SidebandKind kind, Mode m, const ModeLayout& layout) {
    if (!layout.has_mode(m))
        throw std::invalid_argument(std::string("sideband_pi: mode ") + mode_name(m) +
                                    " not present in layout " + layout.describe());
    int d = layout.dim();
    int stride = layout.stride(m);
    int half = layout.spin_stride();
    int cut = layout.cutoff(m);
    Mat u = Mat::Identity(d, d);
    const Cplx mi(0.0, -1.0);
    for (int i = 0; i < d; ++i) {
        auto ket = layout.basis_decode(i);
        if (ket.spin != Spin::g) continue;
        int n = ket.occ[static_cast<size_t>(m)];
        int j;  // partner index with spin e
        if (kind == SidebandKind::blue) {
            if (n + 1 >= cut) continue;
            j = i + half + stride;  // |e, n+1>
        } else {
            if (n - 1 < 0) continue;
            j = i + half - stride;  // |e, n-1>
        }
        u(i, i) = 0.0;
        u(j, j) = 0.0;
        u(j, i) = mi;
        u(i, j) = mi;
    }
    return LinearOperator(layout, std::move(u));
}

// Joint two-mode sideband H/hbar = (Omega0/2)(a^dag b^dag sigma+ + a b sigma-).
// Each pair |g,na,nb> <-> |e,na+1,nb+1> then oscillates at the Rabi frequency
// Omega_d = sqrt((na+1)(nb+1)) Omega0, i.e. P_e(t) = sin^2(Omega_d t / 2).
struct JointSidebandParams {
    double omega0;         // base Rabi frequency, rad/s
    Mode mode1 = Mode::a;
    Mode mode2 = Mode::b;

    void validate(const ModeLayout& layout) const {
        if (omega0 <= 0.0) throw std::invalid_argument("JointSidebandParams: omega0 must be positive");
        if (mode1 == mode2) throw std::invalid_argument("JointSidebandParams: modes must differ");
        if (!layout.has_mode(mode1) || !layout.has_mode(mode2))
            throw std::invalid_argument("JointSidebandParams: modes not present in layout " + layout.describe());
    }
};

inline LinearOperator joint_sideband_h(const JointSidebandParams& p, const ModeLayout& layout) {
    p.validate(layout);
    Mat up = creation(layout, p.mode1).mat * creation(layout, p.mode2).mat * spin_raising(layout).mat;
    Mat h = (p.omega0 / 2.0) * (up + up.adjoint());
    return LinearOperator(layout, std::move(h), OperatorUnit::angular_frequency);
}

inline LinearOperator joint_sideband_u(const JointSidebandParams& p, double t, const ModeLayout& layout) {
    return hermitian_expm(joint_sideband_h(p, layout), t);
}

// Controlled-SWAP of modes b and c (control: spin), composed from CBS gates:
//   CS = U_cbs(a,b; upsilon=pi/2) * U_cbs(a,c; upsilon=0)^2
// On the vacuum-c subspace this acts as |g,n,m,0> -> |g,n,m,0> and
// |e,n,m,0> -> |e,m,n,0> with no residual phase.
inline LinearOperator cswap_composed(const ModeLayout& layout, double xi = default_xi,
                                     CbsRoute route = CbsRoute::automatic) {
    if (layout.n_modes() != 3)
        throw std::invalid_argument("cswap_composed: needs a three-mode layout, got " + layout.describe());
    CbsParams ac{xi, 0.0, Mode::a, Mode::c, -1.0};
    CbsParams ab{xi, pi / 2.0, Mode::a, Mode::b, -1.0};
    Mat uac = u_cbs(ac, layout, route).mat;
    Mat uab = u_cbs(ab, layout, route).mat;
    return LinearOperator(layout, uab * uac * uac);
}

// Spin-echo split of one CBS segment: the segment of duration t at absolute
// phase upsilon becomes [U(t/2, upsilon), R(pi,0), U(t/2, upsilon+pi)], applied
// in list order. The second half at upsilon+pi generates the inverse coupling,
// so spin dephasing acquired in the first half is refocused.
struct EchoedSegment {
    CbsParams first_half;
    CbsParams second_half;
};

inline EchoedSegment echoed_cbs(const CbsParams& p, const ModeLayout& layout) {
    p.validate(layout);
    CbsParams h1 = p, h2 = p;
    h1.duration = p.time() / 2.0;
    h2.duration = p.time() / 2.0;
    h2.upsilon = p.upsilon + pi;
    return EchoedSegment{h1, h2};
}

inline std::vector<LinearOperator> echoed_cbs_unitaries(const CbsParams& p, const ModeLayout& layout,
                                                        CbsRoute route = CbsRoute::automatic) {
    EchoedSegment seg = echoed_cbs(p, layout);
    return {u_cbs(seg.first_half, layout, route), spin_rotation(pi, 0.0, layout),
            u_cbs(seg.second_half, layout, route)};
}

// ---------------------------------------------------------------------------
// State preparation (ideal closed forms; physical pulse preparation lives in
// the protocol layer where noise is in play)

inline HybridState prepare_fock(int n, Mode m, const ModeLayout& layout) {
    if (n < 0 || n >= layout.cutoff(m))
        throw std::out_of_range("prepare_fock: n = " + std::to_string(n) + " outside cutoff " +
                                std::to_string(layout.cutoff(m)) + " of mode " +
                                std::string(1, mode_name(m)));
    std::vector<int> occ(static_cast<size_t>(layout.n_modes()), 0);
    occ[static_cast<size_t>(m)] = n;
    return HybridState::basis(layout, Spin::g, occ);
}

inline Vec coherent_amplitudes(Cplx alpha, int cutoff) {
    Vec c(cutoff);
    c(0) = 1.0;
    for (int n = 1; n < cutoff; ++n) c(n) = c(n - 1) * alpha / std::sqrt(static_cast<double>(n));
    c /= c.norm();  // renormalized truncation of e^{-|alpha|^2/2} alpha^n / sqrt(n!)
    return c;
}

inline HybridState prepare_coherent(Cplx alpha, Mode m, const ModeLayout& layout) {
    Vec c = coherent_amplitudes(alpha, layout.cutoff(m));
    Vec v = Vec::Zero(layout.dim());
    std::vector<int> occ(static_cast<size_t>(layout.n_modes()), 0);
    for (int n = 0; n < layout.cutoff(m); ++n) {
        occ[static_cast<size_t>(m)] = n;
        v(layout.basis_index(Spin::g, occ)) = c(n);
    }
    return HybridState::pure(layout, std::move(v));
}

inline std::vector<double> thermal_weights(double nbar, int cutoff) {
    if (nbar < 0.0) throw std::invalid_argument("thermal_weights: nbar must be >= 0");
    std::vector<double> w(static_cast<size_t>(cutoff));
    double ratio = nbar / (1.0 + nbar);
    double x = 1.0;
    double sum = 0.0;
    for (int n = 0; n < cutoff; ++n) {
        w[static_cast<size_t>(n)] = x;
        sum += x;
        x *= ratio;
    }
    for (double& v : w) v /= sum;  // renormalized over the truncated space
    return w;
}

inline HybridState prepare_thermal(double nbar, Mode m, const ModeLayout& layout) {
    auto w = thermal_weights(nbar, layout.cutoff(m));
    Mat rho = Mat::Zero(layout.dim(), layout.dim());
    std::vector<int> occ(static_cast<size_t>(layout.n_modes()), 0);
    for (int n = 0; n < layout.cutoff(m); ++n) {
        occ[static_cast<size_t>(m)] = n;
        int i = layout.basis_index(Spin::g, occ);
        rho(i, i) = w[static_cast<size_t>(n)];
    }
    return HybridState::density(layout, std::move(rho));
}

// Incoherent Fock mixture sum_n w_n |n><n| on one mode (spin |g>, other modes
// in vacuum). Weights are renormalized; they must be non-negative.
inline HybridState prepare_fock_mixture(const std::vector<double>& weights, Mode m,
                                        const ModeLayout& layout) {
    if (weights.empty() || static_cast<int>(weights.size()) > layout.cutoff(m))
        throw std::invalid_argument("prepare_fock_mixture: weight list empty or beyond cutoff");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("prepare_fock_mixture: negative weight");
        sum += w;
    }
    if (sum <= 0.0) throw std::invalid_argument("prepare_fock_mixture: zero total weight");
    Mat rho = Mat::Zero(layout.dim(), layout.dim());
    std::vector<int> occ(static_cast<size_t>(layout.n_modes()), 0);
    for (size_t n = 0; n < weights.size(); ++n) {
        occ[static_cast<size_t>(m)] = static_cast<int>(n);
        int i = layout.basis_index(Spin::g, occ);
        rho(i, i) = weights[n] / sum;
    }
    return HybridState::density(layout, std::move(rho));
}

// Recipe form used by protocols and the sequence language.
struct PrepRecipe {
    enum class Kind { fock, coherent, thermal } kind = Kind::fock;
    int n = 0;           // fock
    Cplx alpha{0.0, 0.0};  // coherent
    double nbar = 0.0;   // thermal
    Mode mode = Mode::a;

    static PrepRecipe fock(int n, Mode m = Mode::a) {
        PrepRecipe r;
        r.kind = Kind::fock;
        r.n = n;
        r.mode = m;
        return r;
    }
    static PrepRecipe coherent(Cplx alpha, Mode m = Mode::a) {
        PrepRecipe r;
        r.kind = Kind::coherent;
        r.alpha = alpha;
        r.mode = m;
        return r;
    }
    static PrepRecipe thermal(double nbar, Mode m = Mode::a) {
        PrepRecipe r;
        r.kind = Kind::thermal;
        r.nbar = nbar;
        r.mode = m;
        return r;
    }

    bool operator==(const PrepRecipe&) const = default;
};

inline HybridState prepare(const PrepRecipe& r, const ModeLayout& layout) {
    switch (r.kind) {
        case PrepRecipe::Kind::fock: return prepare_fock(r.n, r.mode, layout);
        case PrepRecipe::Kind::coherent: return prepare_coherent(r.alpha, r.mode, layout);
        case PrepRecipe::Kind::thermal: return prepare_thermal(r.nbar, r.mode, layout);
    }
    throw std::logic_error("prepare: unreachable");
}

// ---------------------------------------------------------------------------
// Truncation diagnostics

// How much population an interior basis state (all occupations at least three
// levels below their cutoff) can deposit into the top two guard levels under
// one application of the operator. Zero for occupation-conserving gates; grows
// when a displacement or beam splitter is run too close to the cutoff.
inline double operator_leakage(const LinearOperator& op) {
    const ModeLayout& layout = op.layout;
    int d = layout.dim();
    double worst = 0.0;
    for (int col = 0; col < d; ++col) {
        auto ket = layout.basis_decode(col);
        bool interior = true;
        for (int k = 0; k < layout.n_modes(); ++k)
            if (ket.occ[static_cast<size_t>(k)] >= layout.cutoffs[static_cast<size_t>(k)] - 2) interior = false;
        if (!interior) continue;
        double leak = 0.0;
        for (int row = 0; row < d; ++row) {
            auto bra = layout.basis_decode(row);
            bool top = false;
            for (int k = 0; k < layout.n_modes(); ++k)
                if (bra.occ[static_cast<size_t>(k)] >= layout.cutoffs[static_cast<size_t>(k)] - 2) top = true;
            if (top) leak += std::norm(op.mat(row, col));
        }
        worst = std::max(worst, leak);
    }
    return worst;
}

}  // namespace cbsim
