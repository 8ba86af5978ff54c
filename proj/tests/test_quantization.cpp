#include "catmap/quantization.hpp"

#include <gtest/gtest.h>

using namespace catmap;

namespace {

IntMatrix golden() { return parse_int_matrix("2,1;1,1"); }

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Plane Weyl quantization on a periodic box [0, L) sampled at x_j = (j + theta2)/N.
// Op^w(e^{2 pi i (u x + v xi)}) psi(x) = e^{2 pi i u x} e^{i pi u v / N} psi(x + v / N).
CMatrix plane_weyl_box(const TrigObservable& a, int N, int L, double theta2) {
    const int n = N * L;
    CMatrix O = CMatrix::Zero(n, n);
    for (const auto& [r, c] : a.coeffs()) {
        // value() uses exp(2 pi i (r_p x - r_q xi)) with r = (r_q, r_p)
        const std::int64_t u = r[1], v = -r[0];
        for (int j = 0; j < n; ++j) {
            const double x = (j + theta2) / N;
            const int src = static_cast<int>(mod_floor(j + v, n));
            O(j, src) += c * std::polar(1.0, two_pi * u * x + pi * static_cast<double>(u * v) / N);
        }
    }
    return O;
}

}  // namespace

TEST(Observable, ValueAndComposition) {
    const TrigObservable a = cos_x1(1);
    EXPECT_NEAR(a.value({0.0, 0.3}).real(), 1.0, 1e-14);
    EXPECT_NEAR(a.value({0.25, 0.3}).real(), 0.0, 1e-14);
    const TrigObservable b = a.compose(golden());
    for (double x : {0.1, 0.37}) {
        const double y = 0.61;
        // (a o A)(x, xi) = a(2x + xi, x + xi)
        EXPECT_NEAR(b.value({x, y}).real(), a.value({2 * x + y, x + y}).real(), 1e-12);
    }
}

TEST(Weyl, ConstantIsIdentity) {
    const QuantumTorus qt(16, 1, {0.3, 0.2});
    EXPECT_LT((weyl(qt, constant_observable(1)) - CMatrix::Identity(16, 16)).norm(), 1e-14);
}

TEST(Weyl, CosineIsTwoTermSum) {
    const QuantumTorus qt(16, 1, {0.3, 0.2});
    const CMatrix O = weyl(qt, cos_x1(1));
    const Lattice r = index_of_frequency({1, 0});
    const Lattice mr = {-r[0], -r[1]};
    EXPECT_LT((O - 0.5 * (translation(qt, r) + translation(qt, mr))).norm(), 1e-14);
    EXPECT_LE(hermiticity_defect(O), 1e-14);
}

TEST(Weyl, AliasingGuard) {
    const QuantumTorus qt(8, 1);
    TrigObservable a(1);
    a.add({4, 0}, 1.0);
    EXPECT_THROW(weyl(qt, a), AliasingError);
    EXPECT_NO_THROW(weyl(qt, a, true));
}

TEST(Weyl, FastPathMatchesTranslations) {
    std::mt19937 g(1);
    std::uniform_int_distribution<int> u(-40, 40);
    for (int N : {7, 8, 13}) {
        const QuantumTorus qt(N, 1, {1.3, 4.1});
        std::map<Lattice, cplx> terms;
        for (int i = 0; i < 50; ++i) terms[{u(g), u(g)}] += cplx(u(g), u(g));
        CMatrix S = CMatrix::Zero(N, N);
        for (const auto& [r, c] : terms) S += c * translation(qt, r);
        EXPECT_LT((weyl_terms(qt, terms) - S).norm(), 1e-10);
    }
}

// The torus operator norm cannot exceed the plane one (up to the box truncation).
TEST(Weyl, TorusNormBelowPlaneNorm) {
    const int N = 6;
    const TrigObservable a = random_nonnegative_observable(1, 1, 11);
    for (double k2 : {0.0, 1.3, 4.0}) {
        const double theta2 = k2 / two_pi;
        double torus = 0;
        for (double k1 : {0.0, 0.7, 2.9, 5.1}) torus = std::max(torus, op_norm(weyl(QuantumTorus(N, 1, {k1, k2}), a)));
        const double plane = op_norm(plane_weyl_box(a, N, 24, theta2));
        EXPECT_LE(torus, 1.05 * plane) << k2;
    }
}

TEST(AntiWick, ResolutionOfIdentity) {
    const QuantumTorus qt(16, 1, {0.5, 1.5});
    const CMatrix I = CMatrix::Identity(16, 16);
    const double d1 = op_norm(anti_wick(qt, constant_observable(1), 192) - I);
    const double d2 = op_norm(anti_wick(qt, constant_observable(1), 384) - I);
    EXPECT_LE(d1, 1e-6);
    // halving under refinement, or both already at roundoff
    EXPECT_TRUE(d2 <= 0.5 * d1 || d2 <= 1e-13) << d1 << " " << d2;
}

TEST(AntiWick, QuadratureMatchesMultiplierForm) {
    const QuantumTorus qt(16, 1, {1.0, 2.0});
    const TrigObservable a = random_nonnegative_observable(1, 2, 3);
    EXPECT_LT(op_norm(anti_wick(qt, a, 192) - anti_wick_exact(qt, a)), 1e-10);
}

TEST(AntiWick, Positivity) {
    const QuantumTorus qt(32, 1, {0.2, 0.9});
    for (std::uint64_t s = 0; s < 10; ++s) {
        const TrigObservable a = random_nonnegative_observable(1, 2, s);
        EXPECT_GE(min_eigenvalue_hermitian(anti_wick_exact(qt, a)), -1e-9);
    }
}

TEST(AntiWick, CloseToWeylAtRateHbar) {
    const TrigObservable a = random_nonnegative_observable(1, 1, 5);
    std::vector<double> x, y;
    for (int N : {16, 32, 64, 128}) {
        const QuantumTorus qt(N, 1);
        x.push_back(std::log(N));
        y.push_back(std::log(op_norm(anti_wick_exact(qt, a) - weyl(qt, a))));
    }
    EXPECT_NEAR(fitted_slope(x, y), -1.0, 0.3);
}

TEST(Moyal, MultiplierBasics) {
    const QuantumTorus qt(32, 1);
    const MoyalMultiplier mu(adapted_scaling_matrix(adapted_frame(golden()), qt.hbar()), qt.hbar());
    EXPECT_NEAR(mu({0, 0}), 1.0, 1e-10);
    std::mt19937 g(4);
    std::uniform_int_distribution<int> u(-6, 6);
    for (int i = 0; i < 20; ++i) {
        const Lattice r{u(g), u(g)};
        EXPECT_NEAR(mu(r), mu({-r[0], -r[1]}), 1e-15);
        EXPECT_GT(mu(r), 0.0);
    }
}

TEST(Moyal, MultiplierMatchesQuadrature) {
    for (int N : {8, 32}) {
        const QuantumTorus qt(N, 1);
        const RMatrix B = adapted_scaling_matrix(adapted_frame(golden()), qt.hbar());
        const MoyalMultiplier mu(B, qt.hbar());
        for (Lattice r : {Lattice{0, 0}, Lattice{1, 0}, Lattice{1, 2}, Lattice{-2, 1}}) {
            const cplx q = moyal_multiplier_quadrature(B, qt.hbar(), r);
            EXPECT_NEAR(q.real(), mu(r), 1e-10);
            EXPECT_NEAR(q.imag(), 0.0, 1e-10);
        }
    }
}

TEST(Moyal, AntiWickLimit) {
    for (int N : {8, 32}) {
        const QuantumTorus qt(N, 1);
        const RMatrix B = RMatrix::Identity(2, 2) / std::sqrt(pi * qt.hbar());
        const MoyalMultiplier mu(B, qt.hbar());
        for (Lattice r : {Lattice{1, 2}, Lattice{3, -1}, Lattice{0, 4}}) {
            EXPECT_NEAR(mu(r), anti_wick_multiplier(N, r), 1e-14);
            EXPECT_NEAR(moyal_multiplier_quadrature(B, qt.hbar(), r).real(), anti_wick_multiplier(N, r), 1e-10);
        }
    }
}

TEST(OpPlus, ConstantIsIdentity) {
    const QuantumTorus qt(32, 1);
    EXPECT_LT(op_norm(op_plus(qt, constant_observable(1), adapted_frame(golden())) - CMatrix::Identity(32, 32)), 1e-10);
}

TEST(OpPlus, Positivity) {
    const QuantumTorus qt(32, 1);
    TrigObservable a = cos_x1(1) + constant_observable(1);
    EXPECT_GE(min_eigenvalue_hermitian(op_plus(qt, a, adapted_frame(golden()))), -1e-9);
}

TEST(OpPlus, ApproachesWeyl) {
    const AdaptedFrame F = adapted_frame(golden());
    const TrigObservable a = random_nonnegative_observable(1, 1, 5);
    std::vector<double> x, y;
    for (int N = 16; N <= 256; N *= 2) {
        const QuantumTorus qt(N, 1);
        x.push_back(std::log(qt.hbar()));
        y.push_back(std::log(op_norm(op_plus(qt, a, F) - weyl(qt, a))));
    }
    EXPECT_GT(fitted_slope(x, y), 0.1);
}

TEST(OpPlus, SquareMultiplierTableVerified) {
    const QuantumTorus qt(16, 1);
    const MultiplierTable T = moyal_square_multiplier(adapted_frame(golden()), qt, 3);
    EXPECT_LE(T.max_quadrature_deviation, 1e-10);
    EXPECT_NEAR(T.values.at({0, 0}), 1.0, 1e-12);
}

TEST(Periodized, PoissonConsistency) {
    const int N = 16;
    const RMatrix B = adapted_scaling_matrix(adapted_frame(golden()), 1.0 / (two_pi * N));
    RVector rho(2), rho0(2);
    rho << 0.3, 0.7;
    rho0 << 0.2, 0.55;
    const GaussianSymbol F = GaussianSymbol::adapted(B, rho0);
    const auto coeffs = periodized_coefficients(F, rho, N);
    double worst = 0;
    for (int i = 0; i < 64; ++i) {
        RVector p(2);
        p << (i + 0.5) / 64, std::fmod(0.37 * i, 1.0);
        worst = std::max(worst, std::abs(periodized_value_direct(F, rho, p, N) - fourier_series_value(coeffs, p)));
    }
    EXPECT_LE(worst, 1e-8);
}

TEST(Periodized, ProductFormula) {
    const int N = 8;
    const QuantumTorus qt(N, 1, {0.4, 1.1});
    const RMatrix B = adapted_scaling_matrix(adapted_frame(golden()), qt.hbar());
    RVector r1(2), r2(2);
    r1 << 0.1, 0.3;
    r2 << 0.25, 0.2;
    const GaussianSymbol F1 = GaussianSymbol::adapted(B, r1), F2 = GaussianSymbol::adapted(B, r2);
    const int P = 24;
    CMatrix S = CMatrix::Zero(N, N);
    for (int i = 0; i < P; ++i)
        for (int j = 0; j < P; ++j) {
            RVector rho(2);
            rho << (i + 0.5) / P, (j + 0.5) / P;
            const CMatrix O1 = weyl_terms(qt, periodized_coefficients(F1, rho, N));
            const CMatrix O2 = weyl_terms(qt, periodized_coefficients(F2, rho, N));
            S += O1.adjoint() * O2 / static_cast<double>(P * P);
        }
    std::map<Lattice, cplx> c;
    for (int a = -12; a <= 12; ++a)
        for (int b = -12; b <= 12; ++b) {
            const cplx v = moyal_periodized_coefficient(F1, F2, {a, b}, N);
            if (std::abs(v) > 1e-15) c[{a, b}] = v;
        }
    EXPECT_LE(op_norm(S - weyl_terms(qt, c)), 1e-4);
}

TEST(Periodized, ProductFormulaAtOriginIsMultiplier) {
    const int N = 8;
    const QuantumTorus qt(N, 1);
    const RMatrix B = adapted_scaling_matrix(adapted_frame(golden()), qt.hbar());
    const GaussianSymbol G0 = GaussianSymbol::adapted(B, RVector::Zero(2));
    const MoyalMultiplier mu(B, qt.hbar());
    for (Lattice n : {Lattice{0, 0}, Lattice{1, 1}, Lattice{2, -1}}) EXPECT_LE(std::abs(moyal_periodized_coefficient(G0, G0, n, N) - mu(n)), 1e-10);
}

namespace {

double double_quadrature_defect(const QuantumTorus& qt, const RMatrix& B, int gr, int g0) {
    const auto grid_r = midpoint_grid(gr), grid_0 = midpoint_grid(g0);
    const double w = 1.0 / (gr * gr * g0 * g0);
    CMatrix S = CMatrix::Zero(qt.dim(), qt.dim());
    for (int a = 0; a < g0; ++a)
        for (int b = 0; b < g0; ++b) {
            RVector r0(2);
            r0 << grid_0[a], grid_0[b];
            for (int c = 0; c < gr; ++c)
                for (int d = 0; d < gr; ++d) {
                    RVector r(2);
                    r << grid_r[c], grid_r[d];
                    const CMatrix O = periodized_gaussian_op(qt, r, r0, B);
                    S += w * O.adjoint() * O;
                }
        }
    return hermitian_op_norm(S - CMatrix::Identity(qt.dim(), qt.dim()));
}

}  // namespace

TEST(Periodized, DoubleQuadratureResolution) {
    const QuantumTorus qt(8, 1, {0.3, 0.9});
    const RMatrix B = adapted_scaling_matrix(adapted_frame(golden()), qt.hbar());
    const double coarse = double_quadrature_defect(qt, B, 1, 6);
    const double fine = double_quadrature_defect(qt, B, 2, 12);
    EXPECT_LE(coarse, 1e-3);
    EXPECT_LE(fine, 0.5 * coarse);
}

TEST(EgorovPlus, DriftAgainstPredictor) {
    const int N = 64;
    const QuantumTorus qt(N, 1, default_kappa(golden(), N));
    const int mE = ehrenfest_times(N, 0.1, lyapunov_data(golden())).m_E;
    const auto rows = egorov_plus_drift(qt, cos_x1(1), adapted_frame(golden()), golden(), std::max(mE, 1));
    EXPECT_EQ(rows[0].defect, 0.0);
    for (size_t t = 1; t < rows.size(); ++t) EXPECT_LE(rows[t].ratio, 50.0);
}
