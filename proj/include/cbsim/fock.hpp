#pragma once
// Truncated hybrid Hilbert space for one spin-1/2 qubit coupled to up to three
// bosonic modes. Every component of the library shares the flat index layout
// defined here: spin is the slowest index, then mode a, then b, then c.
//
//   flat = ((spin * Na + na) * Nb + nb) * Nc + nc
//
// States are dense complex vectors (pure) or dense complex matrices (density
// operators); operators are dense matrices tagged with their unit so that a
// Hamiltonian (angular frequency) is never silently applied as a gate.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cbsim {

using Cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

enum class Mode : int { a = 0, b = 1, c = 2 };

inline char mode_name(Mode m) {
    switch (m) {
        case Mode::a: return 'a';
        case Mode::b: return 'b';
        case Mode::c: return 'c';
    }
    throw std::invalid_argument("mode_name: unknown mode id");
}

enum class Spin : int { g = 0, e = 1 };

// Cutoffs per mode; a cutoff of N keeps Fock levels 0..N-1. Protocols that can
// populate level n (including transiently, e.g. both-mode quanta meeting in one
// mode during a beam-splitter segment) must use cutoff >= n + 4; the top two
// levels act as a guard band whose population is the leakage metric.
struct ModeLayout {
    std::vector<int> cutoffs;

    ModeLayout() = default;
    explicit ModeLayout(std::vector<int> cuts) : cutoffs(std::move(cuts)) { validate(); }
    ModeLayout(std::initializer_list<int> cuts) : cutoffs(cuts) { validate(); }

    void validate() const {
        if (cutoffs.empty() || cutoffs.size() > 3)
            throw std::invalid_argument("ModeLayout: need between 1 and 3 modes, got " +
                                        std::to_string(cutoffs.size()));
        for (int c : cutoffs)
            if (c < 2)
                throw std::invalid_argument("ModeLayout: every cutoff must be >= 2");
    }

    int n_modes() const { return static_cast<int>(cutoffs.size()); }

    bool has_mode(Mode m) const { return static_cast<int>(m) < n_modes(); }

    int cutoff(Mode m) const {
        if (!has_mode(m))
            throw std::out_of_range(std::string("ModeLayout: mode ") + mode_name(m) +
                                    " not present in this layout");
        return cutoffs[static_cast<size_t>(m)];
    }

    int dim() const {
        int d = 2;
        for (int c : cutoffs) d *= c;
        return d;
    }

    // Stride of a mode in the flat index (product of the cutoffs after it).
    int stride(Mode m) const {
        int s = 1;
        for (int k = static_cast<int>(m) + 1; k < n_modes(); ++k) s *= cutoffs[k];
        return s;
    }

    int spin_stride() const { return dim() / 2; }

    int basis_index(Spin s, const std::vector<int>& occ) const {
        if (static_cast<int>(occ.size()) != n_modes())
            throw std::invalid_argument("basis_index: expected " + std::to_string(n_modes()) +
                                        " occupation numbers, got " + std::to_string(occ.size()));
        int idx = static_cast<int>(s);
        for (int k = 0; k < n_modes(); ++k) {
            if (occ[k] < 0 || occ[k] >= cutoffs[k])
                throw std::out_of_range("basis_index: occupation " + std::to_string(occ[k]) +
                                        " outside [0," + std::to_string(cutoffs[k] - 1) +
                                        "] for mode " + std::string(1, mode_name(Mode(k))));
            idx = idx * cutoffs[k] + occ[k];
        }
        return idx;
    }

    struct BasisKet {
        Spin spin;
        std::array<int, 3> occ{0, 0, 0};  // entries beyond n_modes() stay 0
    };

    BasisKet basis_decode(int idx) const {
        if (idx < 0 || idx >= dim())
            throw std::out_of_range("basis_decode: index " + std::to_string(idx) +
                                    " outside [0," + std::to_string(dim() - 1) + "]");
        BasisKet ket;
        for (int k = n_modes() - 1; k >= 0; --k) {
            ket.occ[static_cast<size_t>(k)] = idx % cutoffs[static_cast<size_t>(k)];
            idx /= cutoffs[static_cast<size_t>(k)];
        }
        ket.spin = static_cast<Spin>(idx);
        return ket;
    }

    bool operator==(const ModeLayout& other) const { return cutoffs == other.cutoffs; }
    bool operator!=(const ModeLayout& other) const { return !(*this == other); }

    std::string describe() const {
        std::string s = "(";
        for (int k = 0; k < n_modes(); ++k) {
            if (k) s += ",";
            s += std::to_string(cutoffs[static_cast<size_t>(k)]);
        }
        return s + ")";
    }
};

inline void require_same_layout(const ModeLayout& x, const ModeLayout& y, const char* who) {
    if (x != y)
        throw std::invalid_argument(std::string(who) + ": layout mismatch " + x.describe() +
                                    " vs " + y.describe());
}

// ---------------------------------------------------------------------------
// States

class HybridState {
  public:
    static HybridState pure(ModeLayout layout, Vec amplitudes) {
        if (amplitudes.size() != layout.dim())
            throw std::invalid_argument("HybridState::pure: amplitude vector has dimension " +
                                        std::to_string(amplitudes.size()) + ", layout needs " +
                                        std::to_string(layout.dim()));
        return HybridState(std::move(layout), std::move(amplitudes));
    }

    static HybridState density(ModeLayout layout, Mat rho) {
        if (rho.rows() != layout.dim() || rho.cols() != layout.dim())
            throw std::invalid_argument("HybridState::density: matrix is " +
                                        std::to_string(rho.rows()) + "x" + std::to_string(rho.cols()) +
                                        ", layout needs " + std::to_string(layout.dim()));
        return HybridState(std::move(layout), std::move(rho));
    }

    // |spin> x |n_a n_b ...>
    static HybridState basis(ModeLayout layout, Spin s, const std::vector<int>& occ) {
        Vec v = Vec::Zero(layout.dim());
        v(layout.basis_index(s, occ)) = 1.0;
        return pure(std::move(layout), std::move(v));
    }

    static HybridState vacuum(ModeLayout layout) {
        return basis(layout, Spin::g, std::vector<int>(static_cast<size_t>(layout.n_modes()), 0));
    }

    const ModeLayout& layout() const { return layout_; }
    int dim() const { return layout_.dim(); }
    bool is_pure() const { return std::holds_alternative<Vec>(repr_); }

    const Vec& amplitudes() const {
        if (!is_pure()) throw std::logic_error("HybridState: amplitudes() on a density operator");
        return std::get<Vec>(repr_);
    }
    Vec& amplitudes() {
        if (!is_pure()) throw std::logic_error("HybridState: amplitudes() on a density operator");
        return std::get<Vec>(repr_);
    }
    const Mat& rho() const {
        if (is_pure()) throw std::logic_error("HybridState: rho() on a pure state");
        return std::get<Mat>(repr_);
    }
    Mat& rho() {
        if (is_pure()) throw std::logic_error("HybridState: rho() on a pure state");
        return std::get<Mat>(repr_);
    }

    HybridState as_density() const {
        if (!is_pure()) return *this;
        const Vec& v = amplitudes();
        return density(layout_, v * v.adjoint());
    }

    // Total weight: <psi|psi> for pure states, Tr rho for density operators.
    double weight() const {
        if (is_pure()) return amplitudes().squaredNorm();
        return rho().trace().real();
    }

    void normalize() {
        double w = weight();
        if (w <= 0.0) throw std::runtime_error("HybridState::normalize: zero-weight state");
        if (is_pure())
            std::get<Vec>(repr_) /= std::sqrt(w);
        else
            std::get<Mat>(repr_) /= w;
    }

    double probability(int flat_index) const {
        if (is_pure()) return std::norm(amplitudes()(flat_index));
        return rho()(flat_index, flat_index).real();
    }

    // Marginal distribution of one mode's occupation number.
    std::vector<double> mode_distribution(Mode m) const {
        int n = layout_.cutoff(m);
        std::vector<double> p(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < dim(); ++i) {
            auto ket = layout_.basis_decode(i);
            p[static_cast<size_t>(ket.occ[static_cast<size_t>(m)])] += probability(i);
        }
        return p;
    }

    std::array<double, 2> spin_distribution() const {
        std::array<double, 2> p{0.0, 0.0};
        for (int i = 0; i < dim(); ++i)
            p[static_cast<size_t>(layout_.basis_decode(i).spin)] += probability(i);
        return p;
    }

    double mode_parity(Mode m) const {
        auto p = mode_distribution(m);
        double par = 0.0;
        for (size_t n = 0; n < p.size(); ++n) par += (n % 2 ? -p[n] : p[n]);
        return par;
    }

    // Population in the top two Fock levels of any mode (truncation guard band).
    double leakage() const {
        double leak = 0.0;
        for (int i = 0; i < dim(); ++i) {
            auto ket = layout_.basis_decode(i);
            bool top = false;
            for (int k = 0; k < layout_.n_modes(); ++k)
                if (ket.occ[static_cast<size_t>(k)] >= layout_.cutoffs[static_cast<size_t>(k)] - 2)
                    top = true;
            if (top) leak += probability(i);
        }
        return leak;
    }

  private:
    HybridState(ModeLayout layout, Vec v) : layout_(std::move(layout)), repr_(std::move(v)) {}
    HybridState(ModeLayout layout, Mat m) : layout_(std::move(layout)), repr_(std::move(m)) {}

    ModeLayout layout_;
    std::variant<Vec, Mat> repr_;
};

// ---------------------------------------------------------------------------
// Operators

enum class OperatorUnit {
    dimensionless,      // gates, ladder/number operators, projectors
    angular_frequency,  // Hamiltonians divided by hbar (rad/s)
};

struct LinearOperator {
    ModeLayout layout;
    Mat mat;
    OperatorUnit unit = OperatorUnit::dimensionless;

    LinearOperator() = default;
    LinearOperator(ModeLayout lay, Mat m, OperatorUnit u = OperatorUnit::dimensionless)
        : layout(std::move(lay)), mat(std::move(m)), unit(u) {
        if (mat.rows() != layout.dim() || mat.cols() != layout.dim())
            throw std::invalid_argument("LinearOperator: matrix dimension does not match layout " +
                                        layout.describe());
    }

    LinearOperator dagger() const { return LinearOperator(layout, mat.adjoint(), unit); }

    bool is_hermitian(double tol = 1e-12) const {
        return (mat - mat.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, mat.cwiseAbs().maxCoeff());
    }
    bool is_unitary(double tol = 1e-10) const {
        Mat d = mat.adjoint() * mat - Mat::Identity(mat.rows(), mat.cols());
        return d.cwiseAbs().maxCoeff() <= tol;
    }
};

inline LinearOperator identity_op(const ModeLayout& layout) {
    return LinearOperator(layout, Mat::Identity(layout.dim(), layout.dim()));
}

// Bosonic annihilation operator on one mode: <n-1| a |n> = sqrt(n).
inline LinearOperator annihilation(const ModeLayout& layout, Mode m) {
    if (!layout.has_mode(m))
        throw std::invalid_argument(std::string("annihilation: mode ") + mode_name(m) +
                                    " not present in layout " + layout.describe());
    int d = layout.dim();
    Mat a = Mat::Zero(d, d);
    int stride = layout.stride(m);
    for (int i = 0; i < d; ++i) {
        auto ket = layout.basis_decode(i);
        int n = ket.occ[static_cast<size_t>(m)];
        if (n >= 1) a(i - stride, i) = std::sqrt(static_cast<double>(n));
    }
    return LinearOperator(layout, std::move(a));
}

inline LinearOperator creation(const ModeLayout& layout, Mode m) {
    LinearOperator a = annihilation(layout, m);
    return LinearOperator(layout, a.mat.adjoint());
}

inline LinearOperator number_operator(const ModeLayout& layout, Mode m) {
    if (!layout.has_mode(m))
        throw std::invalid_argument(std::string("number_operator: mode ") + mode_name(m) +
                                    " not present in layout " + layout.describe());
    int d = layout.dim();
    Mat n = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i)
        n(i, i) = static_cast<double>(layout.basis_decode(i).occ[static_cast<size_t>(m)]);
    return LinearOperator(layout, std::move(n));
}

// Spin operators acting as identity on the modes. Basis order (g, e).
inline LinearOperator spin_operator(const ModeLayout& layout, const Eigen::Matrix2cd& s) {
    int d = layout.dim();
    int half = layout.spin_stride();
    Mat m = Mat::Zero(d, d);
    m.block(0, 0, half, half) = s(0, 0) * Mat::Identity(half, half);
    m.block(0, half, half, half) = s(0, 1) * Mat::Identity(half, half);
    m.block(half, 0, half, half) = s(1, 0) * Mat::Identity(half, half);
    m.block(half, half, half, half) = s(1, 1) * Mat::Identity(half, half);
    return LinearOperator(layout, std::move(m));
}

inline LinearOperator sigma_z(const ModeLayout& layout) {
    Eigen::Matrix2cd s;
    s << 1.0, 0.0, 0.0, -1.0;  // +1 on |g>, -1 on |e>
    return spin_operator(layout, s);
}

inline LinearOperator excited_projector(const ModeLayout& layout) {
    Eigen::Matrix2cd s;
    s << 0.0, 0.0, 0.0, 1.0;
    return spin_operator(layout, s);
}

inline LinearOperator spin_raising(const ModeLayout& layout) {
    Eigen::Matrix2cd s;
    s << 0.0, 0.0, 1.0, 0.0;  // |e><g|
    return spin_operator(layout, s);
}

// ---------------------------------------------------------------------------
// Application and expectation values

inline HybridState apply(const LinearOperator& op, const HybridState& state) {
    require_same_layout(op.layout, state.layout(), "apply");
    if (state.is_pure()) return HybridState::pure(state.layout(), op.mat * state.amplitudes());
    // Density operators transform by conjugation; for unitary-tagged gates this
    // is U rho U^dag. No renormalization is applied.
    return HybridState::density(state.layout(), op.mat * state.rho() * op.mat.adjoint());
}

inline Cplx expectation(const HybridState& state, const LinearOperator& op) {
    require_same_layout(op.layout, state.layout(), "expectation");
    if (state.is_pure()) {
        const Vec& v = state.amplitudes();
        return v.dot(op.mat * v);  // Eigen dot conjugates the left argument
    }
    return (op.mat * state.rho()).trace();
}

// ---------------------------------------------------------------------------
// Partial trace

// Subsystem ids for partial_trace: 0 = spin, 1 + static_cast<int>(mode) = mode.
inline constexpr int subsystem_spin = 0;
inline constexpr int subsystem_of(Mode m) { return 1 + static_cast<int>(m); }

struct ReducedState {
    std::vector<int> dims;  // dimensions of the kept subsystems, in layout order
    Mat rho;

    int dim() const { return static_cast<int>(rho.rows()); }

    std::vector<double> diagonal() const {
        std::vector<double> p(static_cast<size_t>(dim()));
        for (int i = 0; i < dim(); ++i) p[static_cast<size_t>(i)] = rho(i, i).real();
        return p;
    }
};

inline ReducedState partial_trace(const HybridState& state, std::vector<int> keep) {
    const ModeLayout& layout = state.layout();
    int n_sub = 1 + layout.n_modes();
    if (keep.empty()) throw std::invalid_argument("partial_trace: empty keep set");
    std::sort(keep.begin(), keep.end());
    if (std::adjacent_find(keep.begin(), keep.end()) != keep.end())
        throw std::invalid_argument("partial_trace: duplicate subsystem in keep set");
    for (int k : keep)
        if (k < 0 || k >= n_sub)
            throw std::out_of_range("partial_trace: subsystem id " + std::to_string(k) +
                                    " outside [0," + std::to_string(n_sub - 1) + "]");

    std::vector<int> sub_dims(static_cast<size_t>(n_sub));
    sub_dims[0] = 2;
    for (int k = 0; k < layout.n_modes(); ++k) sub_dims[static_cast<size_t>(k + 1)] = layout.cutoffs[static_cast<size_t>(k)];

    std::vector<int> sub_strides(static_cast<size_t>(n_sub), 1);
    for (int k = n_sub - 2; k >= 0; --k)
        sub_strides[static_cast<size_t>(k)] = sub_strides[static_cast<size_t>(k + 1)] * sub_dims[static_cast<size_t>(k + 1)];

    std::vector<bool> kept(static_cast<size_t>(n_sub), false);
    for (int k : keep) kept[static_cast<size_t>(k)] = true;

    int kept_dim = 1;
    std::vector<int> kept_dims;
    for (int k = 0; k < n_sub; ++k)
        if (kept[static_cast<size_t>(k)]) {
            kept_dim *= sub_dims[static_cast<size_t>(k)];
            kept_dims.push_back(sub_dims[static_cast<size_t>(k)]);
        }

    auto split = [&](int flat, int& kept_part, int& traced_part) {
        kept_part = 0;
        traced_part = 0;
        for (int k = 0; k < n_sub; ++k) {
            int coord = (flat / sub_strides[static_cast<size_t>(k)]) % sub_dims[static_cast<size_t>(k)];
            if (kept[static_cast<size_t>(k)])
                kept_part = kept_part * sub_dims[static_cast<size_t>(k)] + coord;
            else
                traced_part = traced_part * sub_dims[static_cast<size_t>(k)] + coord;
        }
    };

    HybridState dens = state.as_density();
    const Mat& rho = dens.rho();
    Mat out = Mat::Zero(kept_dim, kept_dim);
    int d = layout.dim();
    for (int i = 0; i < d; ++i) {
        int ki, ti;
        split(i, ki, ti);
        for (int j = 0; j < d; ++j) {
            int kj, tj;
            split(j, kj, tj);
            if (ti == tj) out(ki, kj) += rho(i, j);
        }
    }
    return ReducedState{std::move(kept_dims), std::move(out)};
}

// ---------------------------------------------------------------------------
// Structural checks used throughout the test suite

inline void check_density_invariants(const HybridState& state, double tol = 1e-9) {
    HybridState d = state.as_density();
    const Mat& rho = d.rho();
    double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > tol)
        throw std::runtime_error("density invariant violated: non-Hermitian by " + std::to_string(herm));
    double tr = std::abs(rho.trace().real() - 1.0);
    if (tr > tol)
        throw std::runtime_error("density invariant violated: trace differs from 1 by " + std::to_string(tr));
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
    double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -tol)
        throw std::runtime_error("density invariant violated: negative eigenvalue " + std::to_string(min_eig));
}

}  // namespace cbsim
