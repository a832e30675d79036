#pragma once
// Statistical estimators shared by the measurement protocols, plus the
// deterministic sampling layer used for simulated shot noise.
//
// Sampling is fully reproducible across platforms: the engine is std::mt19937_64
// (whose output sequence the standard pins down) and uniform doubles are formed
// by an explicit bit shift rather than a distribution object.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbsim {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        // Box-Muller; callers needing reproducibility must consume in order.
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

  private:
    std::mt19937_64 engine_;
};

// Derive an independent substream for sweep point `index` so results do not
// depend on evaluation order. SplitMix64 finalizer.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Multinomial draw by CDF inversion. Probabilities must be >= 0 and sum to 1
// within 1e-9; zero shots yields all-zero counts.
inline std::vector<long long> sample_counts(const std::vector<double>& probs, long long shots, Rng& rng) {
    if (probs.empty()) throw std::invalid_argument("sample_counts: empty probability vector");
    if (shots < 0) throw std::invalid_argument("sample_counts: negative shot count");
    double sum = 0.0;
    for (double p : probs) {
        if (p < -1e-12 || !std::isfinite(p))
            throw std::invalid_argument("sample_counts: negative or non-finite probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("sample_counts: probabilities sum to " + std::to_string(sum) +
                                    ", expected 1 within 1e-9");
    std::vector<long long> counts(probs.size(), 0);
    for (long long s = 0; s < shots; ++s) {
        double u = rng.uniform() * sum;
        double acc = 0.0;
        size_t k = probs.size() - 1;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) {
                k = i;
                break;
            }
        }
        ++counts[k];
    }
    return counts;
}

inline std::vector<long long> sample_counts(const std::vector<double>& probs, long long shots,
                                            std::uint64_t seed) {
    Rng rng(seed);
    return sample_counts(probs, shots, rng);
}

// Binomial standard error with a floor so weighted fits never see sigma = 0.
inline double binomial_se(double p_hat, long long shots) {
    if (shots <= 0) throw std::invalid_argument("binomial_se: shots must be positive");
    double se = std::sqrt(std::max(0.0, p_hat * (1.0 - p_hat)) / static_cast<double>(shots));
    return std::max(se, 0.5 / static_cast<double>(shots));
}

// ---------------------------------------------------------------------------
// Sinusoid fit y = offset + (contrast/2) cos(x - phase), linear in the basis
// {1, cos x, sin x}. Contrast is reported relative to full swing, i.e. a curve
// P = 1/2 (1 + C cos x) fits with contrast = C.

struct SinusoidFit {
    double offset = 0.0;
    double contrast = 0.0;  // 2 * amplitude
    double phase = 0.0;
    double se_offset = 0.0;
    double se_contrast = 0.0;
    double se_phase = 0.0;
};

inline SinusoidFit fit_sinusoid(const std::vector<double>& x, const std::vector<double>& y,
                                const std::vector<double>& sigma = {}) {
    size_t n = x.size();
    if (y.size() != n || (!sigma.empty() && sigma.size() != n))
        throw std::invalid_argument("fit_sinusoid: input lengths differ");
    if (n < 4) throw std::invalid_argument("fit_sinusoid: need at least 4 points, got " + std::to_string(n));

    Eigen::MatrixXd design(n, 3);
    Eigen::VectorXd rhs(n), w(n);
    for (size_t i = 0; i < n; ++i) {
        double wi = 1.0;
        if (!sigma.empty()) {
            if (sigma[i] <= 0.0) throw std::invalid_argument("fit_sinusoid: non-positive sigma");
            wi = 1.0 / sigma[i];
        }
        design(static_cast<Eigen::Index>(i), 0) = wi;
        design(static_cast<Eigen::Index>(i), 1) = wi * std::cos(x[i]);
        design(static_cast<Eigen::Index>(i), 2) = wi * std::sin(x[i]);
        rhs(static_cast<Eigen::Index>(i)) = wi * y[i];
        w(static_cast<Eigen::Index>(i)) = wi;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.singularValues()(2) < 1e-10 * svd.singularValues()(0))
        throw std::invalid_argument("fit_sinusoid: degenerate design matrix (phases do not span a cycle)");
    Eigen::Vector3d beta = svd.solve(rhs);

    Eigen::Matrix3d cov = (design.transpose() * design).inverse();
    if (sigma.empty()) {
        double ssr = (design * beta - rhs).squaredNorm();
        cov *= ssr / static_cast<double>(n - 3);
    }

    SinusoidFit fit;
    fit.offset = beta(0);
    double bc = beta(1), bs = beta(2);
    double amp = std::hypot(bc, bs);
    fit.contrast = 2.0 * amp;
    fit.phase = (amp > 0.0) ? std::atan2(bs, bc) : 0.0;
    fit.se_offset = std::sqrt(std::max(0.0, cov(0, 0)));
    if (amp > 1e-15) {
        double var_amp = (bc * bc * cov(1, 1) + bs * bs * cov(2, 2) + 2.0 * bc * bs * cov(1, 2)) / (amp * amp);
        fit.se_contrast = 2.0 * std::sqrt(std::max(0.0, var_amp));
        double var_ph = (bs * bs * cov(1, 1) + bc * bc * cov(2, 2) - 2.0 * bc * bs * cov(1, 2)) /
                        (amp * amp * amp * amp);
        fit.se_phase = std::sqrt(std::max(0.0, var_ph));
    } else {
        fit.se_contrast = 2.0 * std::sqrt(std::max(0.0, cov(1, 1) + cov(2, 2)));
        fit.se_phase = 3.14159265358979323846;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Wigner function of Fock state |n> at phase-space point alpha:
//   W_n(alpha) = (2/pi) (-1)^n e^{-2|alpha|^2} L_n(4 |alpha|^2)
// with the Laguerre polynomial evaluated by the stable three-term recurrence.

inline double laguerre(int n, double x) {
    if (n < 0) throw std::invalid_argument("laguerre: negative order");
    double lkm1 = 1.0;  // L_0
    if (n == 0) return lkm1;
    double lk = 1.0 - x;  // L_1
    for (int k = 1; k < n; ++k) {
        double lkp1 = ((2.0 * k + 1.0 - x) * lk - k * lkm1) / (k + 1.0);
        lkm1 = lk;
        lk = lkp1;
    }
    return lk;
}

inline double wigner_fock_analytic(int n, std::complex<double> alpha) {
    if (n < 0) throw std::invalid_argument("wigner_fock_analytic: negative Fock index");
    double a2 = std::norm(alpha);
    double sign = (n % 2 == 0) ? 1.0 : -1.0;
    return (2.0 / 3.14159265358979323846) * sign * std::exp(-2.0 * a2) * laguerre(n, 4.0 * a2);
}

// ---------------------------------------------------------------------------
// Non-negative least squares (Lawson-Hanson active set): min ||A x - b||, x >= 0.

inline Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iter = 200) {
    const int ncol = static_cast<int>(a.cols());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(ncol);
    std::vector<bool> passive(static_cast<size_t>(ncol), false);
    // Stationarity tolerance scaled to the gradient at the origin, so that
    // one dominant row (e.g. an equality-constraint penalty) cannot mask
    // genuine descent directions in the remaining columns.
    double tol = 1e-12 * (a.transpose() * b).cwiseAbs().maxCoeff();
    if (!(tol > 0.0)) tol = 1e-12;

    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<int> idx;
        for (int j = 0; j < ncol; ++j)
            if (passive[static_cast<size_t>(j)]) idx.push_back(j);
        Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
        for (size_t k = 0; k < idx.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
        Eigen::VectorXd zp = ap.colPivHouseholderQr().solve(b);
        z.setZero();
        for (size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
    };

    for (int outer = 0; outer < max_iter; ++outer) {
        Eigen::VectorXd grad = a.transpose() * (b - a * x);
        int best = -1;
        double best_g = tol;
        for (int j = 0; j < ncol; ++j)
            if (!passive[static_cast<size_t>(j)] && grad(j) > best_g) {
                best_g = grad(j);
                best = j;
            }
        if (best < 0) break;
        passive[static_cast<size_t>(best)] = true;

        Eigen::VectorXd z(ncol);
        for (int inner = 0; inner < max_iter; ++inner) {
            solve_passive(z);
            bool all_pos = true;
            for (int j = 0; j < ncol; ++j)
                if (passive[static_cast<size_t>(j)] && z(j) <= 0.0) all_pos = false;
            if (all_pos) break;
            double step = 1.0;
            for (int j = 0; j < ncol; ++j)
                if (passive[static_cast<size_t>(j)] && z(j) <= 0.0)
                    step = std::min(step, x(j) / (x(j) - z(j)));
            x += step * (z - x);
            for (int j = 0; j < ncol; ++j)
                if (passive[static_cast<size_t>(j)] && x(j) <= 1e-14) {
                    passive[static_cast<size_t>(j)] = false;
                    x(j) = 0.0;
                }
        }
        x = z.cwiseMax(0.0);
        for (int j = 0; j < ncol; ++j)
            if (!passive[static_cast<size_t>(j)]) x(j) = 0.0;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Fit a Fock mixture rho = sum_n d_n |n><n| to Wigner samples: weighted least
// squares with d_n >= 0 and sum d_n = 1 (the sum constraint enters as a heavily
// weighted augmentation row, then the result is renormalized exactly).

struct MixtureFit {
    std::vector<double> weights;
    std::vector<double> se;
};

struct WignerPoint {
    std::complex<double> alpha;
    double w = 0.0;
    double se = 0.0;          // <= 0 means exact (unit weight)
    double leakage = 0.0;     // guard-band population after the displaced-parity circuit
    bool flagged = false;     // leakage exceeded the trust threshold (1e-4)
};

inline MixtureFit fit_wigner_mixture(const std::vector<WignerPoint>& samples, int n_max) {
    if (n_max < 0) throw std::invalid_argument("fit_wigner_mixture: negative n_max");
    const int ncol = n_max + 1;
    if (static_cast<int>(samples.size()) < ncol)
        throw std::invalid_argument("fit_wigner_mixture: need at least " + std::to_string(ncol) +
                                    " sample points, got " + std::to_string(samples.size()));
    double wmax = 0.0;
    for (const auto& s : samples) wmax = std::max(wmax, std::abs(s.w));
    if (wmax == 0.0)
        throw std::invalid_argument("fit_wigner_mixture: all Wigner samples are zero (degenerate fit)");

    const int nrow = static_cast<int>(samples.size());
    Eigen::MatrixXd a(nrow + 1, ncol);
    Eigen::VectorXd b(nrow + 1);
    double wsum = 0.0;
    for (int i = 0; i < nrow; ++i) {
        double wi = samples[static_cast<size_t>(i)].se > 0.0 ? 1.0 / samples[static_cast<size_t>(i)].se : 1.0;
        wsum += wi;
        for (int n = 0; n < ncol; ++n)
            a(i, n) = wi * wigner_fock_analytic(n, samples[static_cast<size_t>(i)].alpha);
        b(i) = wi * samples[static_cast<size_t>(i)].w;
    }
    // Soft sum-to-one row at the weight of a typical data row; the result is
    // renormalised below, so this only has to keep the scale from drifting.
    double lambda = wsum / nrow;
    for (int n = 0; n < ncol; ++n) a(nrow, n) = lambda;
    b(nrow) = lambda;

    Eigen::VectorXd d = nnls(a, b);
    double total = d.sum();
    if (total <= 0.0) throw std::runtime_error("fit_wigner_mixture: degenerate fit (zero total weight)");
    d /= total;

    // Plain weighted-LS covariance on the active support, data rows only.
    MixtureFit fit;
    fit.weights.assign(d.data(), d.data() + ncol);
    fit.se.assign(static_cast<size_t>(ncol), 0.0);
    std::vector<int> support;
    for (int n = 0; n < ncol; ++n)
        if (d(n) > 1e-12) support.push_back(n);
    if (!support.empty()) {
        Eigen::MatrixXd as(nrow, static_cast<Eigen::Index>(support.size()));
        for (size_t k = 0; k < support.size(); ++k)
            as.col(static_cast<Eigen::Index>(k)) = a.block(0, support[k], nrow, 1);
        Eigen::MatrixXd gram = as.transpose() * as;
        Eigen::MatrixXd cov = gram.ldlt().solve(
            Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));
        for (size_t k = 0; k < support.size(); ++k)
            fit.se[static_cast<size_t>(support[k])] =
                std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))));
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood fit of a Poisson number law p_m = e^{-lam} lam^m / m! to
// measured Fock populations (Gaussian errors), by golden-section search.

struct PoissonFit {
    double mean = 0.0;
    double se = 0.0;
};

inline double poisson_pmf(int m, double lam) {
    if (m < 0) throw std::invalid_argument("poisson_pmf: negative count");
    if (lam < 0.0) throw std::invalid_argument("poisson_pmf: negative mean");
    if (lam == 0.0) return m == 0 ? 1.0 : 0.0;
    return std::exp(m * std::log(lam) - lam - std::lgamma(m + 1.0));
}

inline PoissonFit fit_poisson_mean(const std::vector<double>& populations,
                                   const std::vector<double>& sigma = {}) {
    size_t m_count = populations.size();
    if (m_count < 2) throw std::invalid_argument("fit_poisson_mean: need populations for at least m = 0, 1");
    if (!sigma.empty() && sigma.size() != m_count)
        throw std::invalid_argument("fit_poisson_mean: sigma length mismatch");
    double pmax = 0.0;
    for (double p : populations) pmax = std::max(pmax, std::abs(p));
    if (pmax <= 0.0) throw std::invalid_argument("fit_poisson_mean: all populations are zero (degenerate)");

    auto weight = [&](size_t m) {
        if (sigma.empty()) return 1.0;
        if (sigma[m] <= 0.0) throw std::invalid_argument("fit_poisson_mean: non-positive sigma");
        return 1.0 / (sigma[m] * sigma[m]);
    };
    auto loss = [&](double lam) {
        double s = 0.0;
        for (size_t m = 0; m < m_count; ++m) {
            double r = populations[m] - poisson_pmf(static_cast<int>(m), lam);
            s += weight(m) * r * r;
        }
        return s;
    };

    // The loss flattens out for large means (all pmf values ~ 0), so a plain
    // golden-section over the full range can settle on the plateau.  Bracket
    // the global minimum with a coarse grid first, then refine.
    const double span = 4.0 * static_cast<double>(m_count);
    const int grid = 512;
    double best_x = 0.0, best_f = loss(0.0);
    for (int i = 1; i <= grid; ++i) {
        double x = span * static_cast<double>(i) / grid;
        double f = loss(x);
        if (f < best_f) {
            best_f = f;
            best_x = x;
        }
    }
    double lo = std::max(0.0, best_x - span / grid), hi = std::min(span, best_x + span / grid);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    double fc = loss(c), fd = loss(d);
    while (hi - lo > 1e-11) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = loss(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = loss(d);
        }
    }
    double lam = 0.5 * (lo + hi);

    // Gauss-Newton curvature for the standard error.
    double curv = 0.0;
    double lam_safe = std::max(lam, 1e-12);
    for (size_t m = 0; m < m_count; ++m) {
        double f = poisson_pmf(static_cast<int>(m), lam_safe);
        double df = f * (static_cast<double>(m) / lam_safe - 1.0);
        curv += weight(m) * df * df;
    }
    PoissonFit fit;
    fit.mean = lam;
    fit.se = curv > 0.0 ? 1.0 / std::sqrt(curv) : 0.0;
    return fit;
}

}  // namespace cbsim
