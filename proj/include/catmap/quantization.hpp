#pragma once

#include "catmap/core.hpp"
#include "catmap/symplectic.hpp"
#include "catmap/torus.hpp"

#include <functional>
#include <map>
#include <random>

namespace catmap {

// Truncated Fourier series a(rho) = sum_r a_r e^{-2 pi i <J r, rho>} on T^{2d}.
class TrigObservable {
public:
    explicit TrigObservable(int d = 1) : d_(d) {
        if (d <= 0) throw ValidationError("observable dimension must be positive");
    }

    int d() const { return d_; }
    const std::map<Lattice, cplx>& coeffs() const { return coeffs_; }
    bool real_flag() const { return real_flag_; }

    void add(const Lattice& r, cplx c) {
        if (static_cast<int>(r.size()) != 2 * d_) throw DimensionError("observable index must have 2d entries");
        coeffs_[r] += c;
    }

    // Marks the observable as real; the symmetry a_{-r} = conj(a_r) is asserted.
    void set_real(double tol = 1e-12) {
        if (!is_real(tol)) throw ValidationError("observable flagged real but a_{-r} != conj(a_r)");
        real_flag_ = true;
    }

    bool is_real(double tol = 1e-12) const {
        for (const auto& [r, c] : coeffs_) {
            Lattice m = r;
            for (auto& x : m) x = -x;
            auto it = coeffs_.find(m);
            cplx cm = it == coeffs_.end() ? cplx(0) : it->second;
            if (std::abs(cm - std::conj(c)) > tol) return false;
        }
        return true;
    }

    int band() const {
        std::int64_t b = 0;
        for (const auto& [r, c] : coeffs_)
            for (auto x : r) b = std::max<std::int64_t>(b, std::abs(x));
        return static_cast<int>(b);
    }

    cplx value(const std::vector<double>& rho) const {
        cplx s = 0;
        for (const auto& [r, c] : coeffs_) {
            double ph = 0;
            for (int i = 0; i < d_; ++i) ph += -static_cast<double>(r[d_ + i]) * rho[i] + static_cast<double>(r[i]) * rho[d_ + i];
            // <J r, rho> = -<r_p, x> + <r_q, xi>
            s += c * std::polar(1.0, -two_pi * ph);
        }
        return s;
    }

    // (a o A)_{A^{-1} r} = a_r.
    TrigObservable compose(const IntMatrix& A) const {
        IntMatrix Ainv = symplectic_inverse(A);
        TrigObservable out(d_);
        for (const auto& [r, c] : coeffs_) out.coeffs_[mat_vec(Ainv, r)] += c;
        out.real_flag_ = real_flag_;
        return out;
    }

    TrigObservable conj() const {
        TrigObservable out(d_);
        for (const auto& [r, c] : coeffs_) {
            Lattice m = r;
            for (auto& x : m) x = -x;
            out.coeffs_[m] = std::conj(c);
        }
        out.real_flag_ = real_flag_;
        return out;
    }

    friend TrigObservable operator*(const TrigObservable& a, const TrigObservable& b) {
        TrigObservable out(a.d_);
        for (const auto& [r, c] : a.coeffs_)
            for (const auto& [s, e] : b.coeffs_) {
                Lattice t(r.size());
                for (size_t i = 0; i < r.size(); ++i) t[i] = r[i] + s[i];
                out.coeffs_[t] += c * e;
            }
        return out;
    }

    friend TrigObservable operator+(const TrigObservable& a, const TrigObservable& b) {
        TrigObservable out = a;
        for (const auto& [r, c] : b.coeffs_) out.coeffs_[r] += c;
        out.real_flag_ = a.real_flag_ && b.real_flag_;
        return out;
    }

    TrigObservable scaled(cplx s) const {
        TrigObservable out = *this;
        for (auto& [r, c] : out.coeffs_) c *= s;
        if (std::abs(s.imag()) > 0) out.real_flag_ = false;
        return out;
    }

private:
    int d_;
    std::map<Lattice, cplx> coeffs_;
    bool real_flag_ = false;
};

// Frequency k (as in e^{2 pi i <k, rho>}) corresponds to the index r = J k.
inline Lattice index_of_frequency(const Lattice& k) {
    const size_t d = k.size() / 2;
    Lattice r(2 * d);
    for (size_t i = 0; i < d; ++i) {
        r[i] = -k[d + i];
        r[d + i] = k[i];
    }
    return r;
}

inline Lattice frequency_of_index(const Lattice& r) {
    const size_t d = r.size() / 2;
    Lattice k(2 * d);
    for (size_t i = 0; i < d; ++i) {
        k[i] = r[d + i];
        k[d + i] = -r[i];
    }
    return k;
}

inline TrigObservable constant_observable(int d, double c = 1.0) {
    TrigObservable a(d);
    a.add(Lattice(2 * d, 0), c);
    a.set_real();
    return a;
}

// cos(2 pi x_1).
inline TrigObservable cos_x1(int d) {
    TrigObservable a(d);
    Lattice k(2 * d, 0);
    k[0] = 1;
    a.add(index_of_frequency(k), 0.5);
    k[0] = -1;
    a.add(index_of_frequency(k), 0.5);
    a.set_real();
    return a;
}

// prod over axes of ((1 + cos 2 pi (rho_i - c_i)) / 2)^k: a nonnegative bump of band k centred at c.
inline TrigObservable bump_observable(const std::vector<double>& center, int k) {
    const int n = static_cast<int>(center.size());
    if (n % 2 || n == 0) throw DimensionError("bump center must have 2d entries");
    if (k < 1) throw ValidationError("bump order must be >= 1");
    std::vector<double> binom(2 * k + 1);
    for (int j = 0; j <= 2 * k; ++j) binom[j] = std::exp(std::lgamma(2 * k + 1) - std::lgamma(j + 1) - std::lgamma(2 * k - j + 1)) / std::pow(4.0, k);
    TrigObservable a(n / 2);
    Lattice freq(n, 0);
    std::function<void(int, cplx)> rec = [&](int axis, cplx c) {
        if (axis == n) {
            a.add(index_of_frequency(freq), c);
            return;
        }
        for (int j = -k; j <= k; ++j) {
            freq[axis] = j;
            rec(axis + 1, c * binom[j + k] * std::polar(1.0, -two_pi * j * center[axis]));
        }
    };
    rec(0, 1.0);
    a.set_real(1e-10);
    return a;
}

// |p|^2 for a random trig polynomial p of the given band: a random nonnegative observable.
inline TrigObservable random_nonnegative_observable(int d, int band, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    TrigObservable p(d);
    Lattice r(2 * d, -band);
    while (true) {
        p.add(r, cplx(g(rng), g(rng)));
        int i = 0;
        while (i < 2 * d && ++r[i] > band) r[i++] = -band;
        if (i == 2 * d) break;
    }
    TrigObservable a = p.conj() * p;
    a.set_real(1e-9);
    return a;
}

// ---------------------------------------------------------------------------------------------
// Weyl quantization: Op^w(a) = sum_r a_r U(r/N).

using Multiplier = std::function<cplx(const Lattice&)>;

inline CMatrix weyl_terms(const QuantumTorus& qt, const std::map<Lattice, cplx>& terms, const Multiplier& mult = nullptr) {
    CMatrix M = CMatrix::Zero(qt.dim(), qt.dim());
    if (qt.d == 1) {
        // Same entries as translation_1d, accumulated without building each monomial.
        const int N = qt.N;
        const double th2 = qt.kappa2(0) / two_pi;
        std::vector<cplx> root(N);
        for (int m = 0; m < N; ++m) root[m] = exp_i_pi_rational(2 * m, N);
        for (const auto& [r, c] : terms) {
            const cplx w = mult ? c * mult(r) : c;
            if (w == cplx(0)) continue;
            const std::int64_t a = r[0], b = r[1];
            const cplx global = w * exp_i_pi_rational(-a * b, N) * std::polar(1.0, two_pi * static_cast<double>(b) * th2 / N);
            const std::int64_t bm = mod_floor(b, N);
            std::int64_t s = floor_div(-a, N);
            std::int64_t j = -a - s * N;
            cplx wrap = std::polar(1.0, qt.kappa1(0) * static_cast<double>(s));
            std::int64_t bk = 0;
            for (std::int64_t k = 0; k < N; ++k) {
                M(k, j) += global * root[bk] * wrap;
                bk += bm;
                if (bk >= N) bk -= N;
                if (++j == N) {
                    j = 0;
                    ++s;
                    wrap = std::polar(1.0, qt.kappa1(0) * static_cast<double>(s));
                }
            }
        }
        return M;
    }
    for (const auto& [r, c] : terms) {
        cplx w = mult ? c * mult(r) : c;
        if (w == cplx(0)) continue;
        translation_monomial(qt, r).add_to(M, w);
    }
    return M;
}

inline void check_band(const QuantumTorus& qt, const TrigObservable& a, bool allow_alias) {
    if (a.d() != qt.d) throw DimensionError("observable and torus dimensions differ");
    if (!allow_alias && 2 * a.band() >= qt.N)
        throw AliasingError("band " + std::to_string(a.band()) + " is not below N/2 = " + std::to_string(qt.N / 2.0));
}

inline CMatrix weyl(const QuantumTorus& qt, const TrigObservable& a, bool allow_alias = false) {
    check_band(qt, a, allow_alias);
    return weyl_terms(qt, a.coeffs());
}

// ---------------------------------------------------------------------------------------------
// Anti-Wick quantization.

// Fourier multiplier of the coherent-state smoothing: e^{-pi |r|^2 / (2N)}.
inline double anti_wick_multiplier(int N, const Lattice& r) {
    double s = 0;
    for (auto x : r) s += static_cast<double>(x) * static_cast<double>(x);
    return std::exp(-pi * s / (2.0 * N));
}

// Exact Fourier route for trigonometric observables.
inline CMatrix anti_wick_exact(const QuantumTorus& qt, const TrigObservable& a) {
    check_band(qt, a, true);
    const int N = qt.N;
    return weyl_terms(qt, a.coeffs(), [N](const Lattice& r) { return cplx(anti_wick_multiplier(N, r)); });
}

inline std::vector<double> midpoint_grid(int G) {
    std::vector<double> g(G);
    for (int i = 0; i < G; ++i) g[i] = (i + 0.5) / G;
    return g;
}

// N^d sum_g w_g a(rho_g) |rho_g><rho_g| on the midpoint grid. samples are row-major over
// (x_1..x_d, xi_1..xi_d) with G points per axis.
inline CMatrix anti_wick_quadrature(const QuantumTorus& qt, const std::vector<cplx>& samples, int G, double tail_tol = 1e-15) {
    const int d = qt.d, N = qt.N;
    const std::int64_t npts = ipow(G, 2 * d);
    if (static_cast<std::int64_t>(samples.size()) != npts) throw DimensionError("anti_wick: grid size mismatch");
    const std::vector<double> grid = midpoint_grid(G);
    if (d == 1) {
        // v_k conj(v_l) summed over xi is a DFT of a(x, .) at integer frequency k - l - N(n - n').
        const double th2 = qt.kappa2(0) / two_pi, k1 = qt.kappa1(0);
        const double reach = std::sqrt(-std::log(tail_tol) / (pi * N));
        struct Term {
            int k;
            std::int64_t n;
            double g;
        };
        std::vector<std::vector<Term>> terms(G);
        std::int64_t nmin = 0, nmax = 0;
        for (int ix = 0; ix < G; ++ix) {
            const double x = grid[ix];
            for (int k = 0; k < N; ++k) {
                const double y = (k + th2) / N;
                for (auto n = static_cast<std::int64_t>(std::ceil(y - x - reach)); n <= static_cast<std::int64_t>(std::floor(y - x + reach)); ++n) {
                    const double u = y - n - x;
                    terms[ix].push_back({k, n, std::exp(-pi * N * u * u)});
                    nmin = std::min(nmin, n);
                    nmax = std::max(nmax, n);
                }
            }
        }
        const std::int64_t M = (N - 1) + N * (nmax - nmin);
        const std::int64_t nm = 2 * M + 1;
        CMatrix Agrid(G, G);
        for (int ix = 0; ix < G; ++ix)
            for (int ij = 0; ij < G; ++ij) Agrid(ix, ij) = samples[static_cast<size_t>(ix) * G + ij];
        CMatrix E(G, nm);
        for (int ij = 0; ij < G; ++ij)
            for (std::int64_t m = -M; m <= M; ++m)
                E(ij, m + M) = std::polar(1.0 / G, two_pi * grid[ij] * static_cast<double>(m));
        CMatrix Ahat = Agrid * E;  // (x, m)
        CMatrix Op = CMatrix::Zero(N, N);
        const double pref = std::sqrt(2.0 * N) / G;
        for (int ix = 0; ix < G; ++ix)
            for (const auto& s : terms[ix])
                for (const auto& t : terms[ix]) {
                    const std::int64_t m = s.k - t.k - static_cast<std::int64_t>(N) * (s.n - t.n);
                    Op(s.k, t.k) += pref * s.g * t.g * std::polar(1.0, k1 * static_cast<double>(s.n - t.n)) * Ahat(ix, m + M);
                }
        return Op;
    }
    // General d: rank-one accumulation over the grid.
    CMatrix Op = CMatrix::Zero(qt.dim(), qt.dim());
    const double w = static_cast<double>(qt.dim()) / static_cast<double>(npts);
    std::vector<double> rho(2 * d);
    for (std::int64_t p = 0; p < npts; ++p) {
        std::int64_t rem = p;
        for (int ax = 2 * d - 1; ax >= 0; --ax) {
            rho[ax] = grid[rem % G];
            rem /= G;
        }
        CVector v = coherent_state(qt, rho, tail_tol, false);
        Op.noalias() += (w * samples[p]) * v * v.adjoint();
    }
    return Op;
}

inline std::vector<cplx> sample_on_grid(const TrigObservable& a, int G) {
    const int d = a.d();
    const std::int64_t npts = ipow(G, 2 * d);
    const std::vector<double> grid = midpoint_grid(G);
    std::vector<cplx> out(npts);
    std::vector<double> rho(2 * d);
    for (std::int64_t p = 0; p < npts; ++p) {
        std::int64_t rem = p;
        for (int ax = 2 * d - 1; ax >= 0; --ax) {
            rho[ax] = grid[rem % G];
            rem /= G;
        }
        out[p] = a.value(rho);
    }
    return out;
}

inline CMatrix anti_wick(const QuantumTorus& qt, const TrigObservable& a, int G) {
    if (a.d() != qt.d) throw DimensionError("observable and torus dimensions differ");
    if (G < 8 * qt.N) throw ValidationError("anti_wick: grid must have at least 8N points per axis");
    return anti_wick_quadrature(qt, sample_on_grid(a, G), G);
}

// ---------------------------------------------------------------------------------------------
// Adapted Gaussians and the Moyal-square multiplier.

// normalization * exp(-pi |B (w - rho0)|^2) with normalization 2^{d/2} |det B|^{1/2}.
struct GaussianSymbol {
    RMatrix B;
    RVector rho0;
    double normalization = 1;
    RMatrix BinvT;  // cached B^{-T}
    double abs_det = 1;

    GaussianSymbol() = default;
    GaussianSymbol(const RMatrix& B_, const RVector& rho0_, double norm)
        : B(B_), rho0(rho0_), normalization(norm), BinvT(B_.transpose().inverse()), abs_det(std::abs(B_.determinant())) {}

    static GaussianSymbol adapted(const RMatrix& B, const RVector& rho0) {
        const int d = static_cast<int>(B.rows() / 2);
        return GaussianSymbol(B, rho0, std::pow(2.0, d / 2.0) * std::sqrt(std::abs(B.determinant())));
    }

    double value(const RVector& w) const { return normalization * std::exp(-pi * (B * (w - rho0)).squaredNorm()); }

    double integral() const { return normalization / abs_det; }

    // Fourier transform F^(k) = int F(w) e^{-2 pi i <k, w>} dw.
    cplx fourier(const RVector& k) const {
        const double e = (BinvT * k).squaredNorm();
        return std::polar(normalization / abs_det * std::exp(-pi * e), -two_pi * k.dot(rho0));
    }
};

// mu_r = (G_hbar # G_hbar)^(-J r) = exp(-(pi/2)|B^{-T} J r|^2 - (pi^3 hbar^2 / 2)|B r|^2).
// Obtained from the Appendix A kernel: K^(k) = exp(-pi|k|^2/2 - pi|A^T k|^2/2), A = pi hbar B J B^T,
// evaluated at k = B^{-T} J r.
class MoyalMultiplier {
public:
    MoyalMultiplier(const RMatrix& B, double hbar) : B_(B), hbar_(hbar) {
        const int d = static_cast<int>(B.rows() / 2);
        P_ = B.transpose().inverse() * standard_J<RMatrix>(d);
    }

    double operator()(const Lattice& r) const {
        RVector v(r.size());
        for (size_t i = 0; i < r.size(); ++i) v(i) = static_cast<double>(r[i]);
        return std::exp(-0.5 * pi * (P_ * v).squaredNorm() - 0.5 * pi * pi * pi * hbar_ * hbar_ * (B_ * v).squaredNorm());
    }

    const RMatrix& B() const { return B_; }
    double hbar() const { return hbar_; }

    // Smallest R such that every |r|_inf >= R has mu_r < threshold.
    int cutoff_band(double threshold = 1e-16, int max_band = 4096) const {
        const int n = static_cast<int>(B_.rows());
        RMatrix Q = 0.5 * pi * P_.transpose() * P_ + 0.5 * pi * pi * pi * hbar_ * hbar_ * B_.transpose() * B_;
        Eigen::SelfAdjointEigenSolver<RMatrix> es(Q);
        const double lmin = es.eigenvalues()(0);
        // mu_r <= exp(-lmin |r|_2^2) <= exp(-lmin |r|_inf^2)
        const double R = std::sqrt(-std::log(threshold) / lmin);
        (void)n;
        return std::min(max_band, static_cast<int>(std::ceil(R)));
    }

private:
    RMatrix B_, P_;
    double hbar_;
};

// Direct quadrature of K^(k) = 2^d int int e^{-2 pi i <k, rho0>} e^{-2 pi i <rho1, rho0>} G(rho1) G(A rho1 - rho0).
// The rho0 integral is carried out numerically per component for each rho1 node. Only d = 1.
inline cplx moyal_multiplier_quadrature(const RMatrix& B, double hbar, const Lattice& r, double h = 0.05, double L = 6.0) {
    if (B.rows() != 2) throw DimensionError("moyal quadrature oracle implemented for d = 1");
    const RMatrix J = standard_J<RMatrix>(1);
    const RMatrix A = pi * hbar * B * J * B.transpose();
    Eigen::Vector2d rv(static_cast<double>(r[0]), static_cast<double>(r[1]));
    const Eigen::Vector2d k = B.transpose().inverse() * J * rv;
    const int n = static_cast<int>(std::ceil(L / h));
    cplx total = 0;
    for (int i = -n; i <= n; ++i)
        for (int j = -n; j <= n; ++j) {
            const Eigen::Vector2d rho1(i * h, j * h);
            const double g1 = std::exp(-pi * rho1.squaredNorm());
            if (g1 < 1e-18) continue;
            const Eigen::Vector2d c = A * rho1;
            cplx inner = 1;
            for (int comp = 0; comp < 2; ++comp) {
                cplx s = 0;
                for (int t = -n; t <= n; ++t) {
                    const double rho0 = c(comp) + t * h;
                    s += std::exp(-pi * (t * h) * (t * h)) * std::polar(1.0, -two_pi * (k(comp) + rho1(comp)) * rho0);
                }
                inner *= s * h;
            }
            total += g1 * inner;
        }
    return 2.0 * total * h * h;
}

struct MultiplierTable {
    double hbar = 0;
    RMatrix B;
    std::map<Lattice, double> values;
    double max_quadrature_deviation = 0;  // cross-check against the Appendix A integral
};

inline MultiplierTable moyal_square_multiplier(const AdaptedFrame& frame, const QuantumTorus& qt, int band, bool verify = true,
                                               std::uint64_t seed = 7) {
    MultiplierTable T;
    T.hbar = qt.hbar();
    T.B = adapted_scaling_matrix(frame, T.hbar);
    MoyalMultiplier mu(T.B, T.hbar);
    const int n = 2 * qt.d;
    Lattice r(n, -band);
    while (true) {
        T.values[r] = mu(r);
        int i = 0;
        while (i < n && ++r[i] > band) r[i++] = -band;
        if (i == n) break;
    }
    if (std::abs(mu(Lattice(n, 0)) - 1.0) > 1e-10) throw DerivationError("mu_0 differs from 1");
    if (verify && qt.d == 1) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> pick(-std::min(band, 6), std::min(band, 6));
        for (int s = 0; s < 3; ++s) {
            Lattice q{pick(rng), pick(rng)};
            const double dev = std::abs(moyal_multiplier_quadrature(T.B, T.hbar, q) - mu(q));
            T.max_quadrature_deviation = std::max(T.max_quadrature_deviation, dev);
        }
        if (T.max_quadrature_deviation > 1e-4)
            throw DerivationError("closed-form multiplier disagrees with quadrature by " + std::to_string(T.max_quadrature_deviation));
    }
    return T;
}

// Op+(a) = Op^w(a * (G_hbar # G_hbar)) = sum_r a_r mu_r U(r/N).
inline CMatrix op_plus(const QuantumTorus& qt, const TrigObservable& a, const AdaptedFrame& frame, bool allow_alias = false) {
    check_band(qt, a, allow_alias);
    MoyalMultiplier mu(adapted_scaling_matrix(frame, qt.hbar()), qt.hbar());
    return weyl_terms(qt, a.coeffs(), [&mu](const Lattice& r) { return cplx(mu(r)); });
}

// ---------------------------------------------------------------------------------------------
// Periodization T_rho(F)(rho') = sum_r F(rho' + r - J rho / 2N) e^{2 pi i <r + rho', rho>}.
// Fourier coefficients: c_r = e^{i pi <r, rho> / N} F^(-rho - J r).

inline std::map<Lattice, cplx> periodized_coefficients(const GaussianSymbol& F, const RVector& rho, int N, double tail = 1e-15) {
    const int n = static_cast<int>(F.B.rows());
    const int d = n / 2;
    const double amp = F.normalization / std::abs(F.B.determinant());
    std::map<Lattice, cplx> out;
    if (amp <= tail) return out;
    // |F^(u)| = amp e^{-pi |B^{-T} u|^2}; keep u = -rho - J r with pi |B^{-T} u|^2 <= log(amp / tail).
    const double c2 = std::log(amp / tail) / pi;
    const RMatrix BT = F.B.transpose();
    RVector ubox(n);
    for (int i = 0; i < n; ++i) ubox(i) = std::sqrt(c2) * BT.row(i).norm();
    // u = -rho - J r  =>  r = J (u + rho) since J^{-1} = -J.
    const RMatrix J = standard_J<RMatrix>(d);
    std::vector<std::int64_t> lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
        // (J v)_i = -v_{d+i} for i < d and v_{i-d} for i >= d, with v = u + rho.
        const int src = i < d ? d + i : i - d;
        const double sign = i < d ? -1.0 : 1.0;
        const double a = sign * (rho(src) - ubox(src)), b = sign * (rho(src) + ubox(src));
        lo[i] = static_cast<std::int64_t>(std::floor(std::min(a, b))) - 1;
        hi[i] = static_cast<std::int64_t>(std::ceil(std::max(a, b))) + 1;
    }
    Lattice r(lo.begin(), lo.end());
    RVector rv(n);
    while (true) {
        for (int i = 0; i < n; ++i) rv(i) = static_cast<double>(r[i]);
        RVector u = -rho - J * rv;
        cplx f = F.fourier(u);
        if (std::abs(f) > tail) out[r] = std::polar(1.0, pi * rv.dot(rho) / N) * f;
        int i = 0;
        while (i < n && ++r[i] > hi[i]) {
            r[i] = lo[i];
            ++i;
        }
        if (i == n) break;
    }
    return out;
}

// Direct lattice sum of T_rho(F) at rho'.
inline cplx periodized_value_direct(const GaussianSymbol& F, const RVector& rho, const RVector& rho_prime, int N, int reach = 12) {
    const int n = static_cast<int>(F.B.rows());
    const int d = n / 2;
    const RMatrix J = standard_J<RMatrix>(d);
    const RVector shift = rho_prime - J * rho / (2.0 * N);
    // Only lattice points near rho0 - shift contribute.
    const RVector centre = F.rho0 - shift;
    Lattice r(n);
    for (int i = 0; i < n; ++i) r[i] = static_cast<std::int64_t>(std::llround(centre(i))) - reach;
    Lattice lo = r;
    cplx s = 0;
    RVector rv(n);
    while (true) {
        for (int i = 0; i < n; ++i) rv(i) = static_cast<double>(r[i]);
        s += F.value(shift + rv) * std::polar(1.0, two_pi * (rv + rho_prime).dot(rho));
        int i = 0;
        while (i < n && ++r[i] > lo[i] + 2 * reach) {
            r[i] = lo[i];
            ++i;
        }
        if (i == n) break;
    }
    return s;
}

inline cplx fourier_series_value(const std::map<Lattice, cplx>& coeffs, const RVector& rho_prime) {
    const int d = static_cast<int>(rho_prime.size() / 2);
    cplx s = 0;
    for (const auto& [r, c] : coeffs) {
        double ph = 0;
        for (int i = 0; i < d; ++i) ph += -static_cast<double>(r[d + i]) * rho_prime(i) + static_cast<double>(r[i]) * rho_prime(d + i);
        s += c * std::polar(1.0, -two_pi * ph);
    }
    return s;
}

// Op^w(T_rho(G_hbar^{rho0})).
inline CMatrix periodized_gaussian_op(const QuantumTorus& qt, const RVector& rho, const RVector& rho0, const RMatrix& B) {
    GaussianSymbol G = GaussianSymbol::adapted(B, rho0);
    return weyl_terms(qt, periodized_coefficients(G, rho, qt.N));
}

inline CMatrix periodized_gaussian_op(const QuantumTorus& qt, const RVector& rho, const RVector& rho0, const AdaptedFrame& frame) {
    return periodized_gaussian_op(qt, rho, rho0, adapted_scaling_matrix(frame, qt.hbar()));
}

// n-th Fourier coefficient of T_0(conj(F1) # F2), computed as
// int e^{i pi <n, rho> / N} conj(F1)^(rho - J n) F2^(-rho) d rho on a square grid (d = 1).
inline cplx moyal_periodized_coefficient(const GaussianSymbol& F1, const GaussianSymbol& F2, const Lattice& n, int N, int points = 241) {
    if (F1.B.rows() != 2) throw DimensionError("moyal_periodized_coefficient implemented for d = 1");
    const RMatrix J = standard_J<RMatrix>(1);
    Eigen::Vector2d nv(static_cast<double>(n[0]), static_cast<double>(n[1]));
    // F2^(-rho) has width |B2| in rho; integrate over a box centred at 0 and at J n.
    const double width = std::max(F1.B.norm(), F2.B.norm());
    const double L = 7.0 * width;
    const double h = 2 * L / (points - 1);
    cplx s = 0;
    for (int i = 0; i < points; ++i)
        for (int j = 0; j < points; ++j) {
            Eigen::Vector2d rho(-L + i * h, -L + j * h);
            // conj(F1)^(k) = conj(F1^(-k))
            cplx f1 = std::conj(F1.fourier(-(rho - J * nv)));
            cplx f2 = F2.fourier(-rho);
            s += std::polar(1.0, pi * nv.dot(rho) / N) * f1 * f2;
        }
    return s * h * h;
}

// ---------------------------------------------------------------------------------------------
// Long-time Egorov for Op+.

struct EgorovPlusRow {
    int t = 0;
    double defect = 0;
    double predictor = 0;  // ||A^t B^{-1}||_inf (max absolute row sum)
    double ratio = 0;
};

inline double inf_norm(const RMatrix& X) { return X.cwiseAbs().rowwise().sum().maxCoeff(); }

inline std::vector<EgorovPlusRow> egorov_plus_drift(const QuantumTorus& qt, const TrigObservable& a, const AdaptedFrame& frame,
                                                    const IntMatrix& A, int t_max, const CMatrix* M_in = nullptr) {
    CMatrix M = M_in ? *M_in : propagator(A, qt);
    const RMatrix B = adapted_scaling_matrix(frame, qt.hbar());
    const RMatrix Binv = B.inverse();
    const CMatrix P0 = op_plus(qt, a, frame, true);
    std::vector<EgorovPlusRow> rows;
    CMatrix Mt = CMatrix::Identity(qt.dim(), qt.dim());
    for (int t = 0; t <= t_max; ++t) {
        if (t > 0) Mt = M * Mt;
        CMatrix lhs = op_plus(qt, a.compose(int_power(A, t)), frame, true);
        CMatrix rhs = Mt.adjoint() * P0 * Mt;
        EgorovPlusRow row;
        row.t = t;
        row.defect = op_norm(lhs - rhs);
        row.predictor = inf_norm(int_power(A, t).cast<double>() * Binv);
        row.ratio = row.predictor > 0 ? row.defect / row.predictor : 0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace catmap
