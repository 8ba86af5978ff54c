#include "catmap/symplectic.hpp"

#include <gtest/gtest.h>

using namespace catmap;

namespace {

IntMatrix M2(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    IntMatrix M(2, 2);
    M << a, b, c, d;
    return M;
}

const IntMatrix golden = M2(2, 1, 1, 1);
const double golden_exp = std::log((3 + std::sqrt(5.0)) / 2);

}  // namespace

TEST(Symplectic, CheckSymplectic) {
    EXPECT_TRUE(check_symplectic(IntMatrix::Identity(2, 2)));
    EXPECT_TRUE(check_symplectic(golden));
    EXPECT_FALSE(check_symplectic(M2(2, 0, 0, 1)));
    EXPECT_THROW(half_dim(IntMatrix::Identity(3, 3)), DimensionError);
}

TEST(Symplectic, Quantizable) {
    EXPECT_TRUE(check_quantizable(golden));
    EXPECT_FALSE(check_quantizable(M2(1, 1, 0, 1)));
    EXPECT_FALSE(check_quantizable(diamond(M2(1, 0, 1, 1), golden)));
    EXPECT_TRUE(check_quantizable(-IntMatrix::Identity(2, 2)));
    EXPECT_THROW(require_quantizable(M2(1, 1, 0, 1)), NotQuantizableError);
}

TEST(Symplectic, DiamondProduct) {
    EXPECT_EQ(diamond(IntMatrix(IntMatrix::Identity(2, 2)), IntMatrix(IntMatrix::Identity(2, 2))), IntMatrix(IntMatrix::Identity(4, 4)));
    IntMatrix expect(4, 4);
    expect << 1, 0, 2, 0,  //
        0, 5, 0, 6,        //
        3, 0, 4, 0,        //
        0, 7, 0, 8;
    EXPECT_EQ(diamond(M2(1, 2, 3, 4), M2(5, 6, 7, 8)), expect);
    EXPECT_TRUE(check_symplectic(diamond(golden, golden)));
    const auto blocks = pair_blocks(diamond(golden, M2(3, 2, 1, 1)));
    ASSERT_TRUE(blocks.has_value());
    EXPECT_EQ((*blocks)[1], M2(3, 2, 1, 1));
}

TEST(Symplectic, LyapunovGolden) {
    const LyapunovData L = lyapunov_data(golden);
    ASSERT_EQ(L.exponents.size(), 1u);
    EXPECT_NEAR(L.exponents[0], golden_exp, 1e-12);
    EXPECT_NEAR(golden_exp, 0.962424, 1e-6);
    EXPECT_EQ(L.multiplicities[0], 1);
    EXPECT_EQ(L.neutral_halfdim, 0);
    EXPECT_NEAR(L.Lambda_plus, 0.962424, 1e-6);
    EXPECT_NEAR(L.Lambda_zero, 0.481212, 1e-6);
}

TEST(Symplectic, LyapunovDiamond) {
    const LyapunovData L2 = lyapunov_data(diamond(golden, golden));
    ASSERT_EQ(L2.exponents.size(), 1u);
    EXPECT_EQ(L2.multiplicities[0], 2);
    EXPECT_NEAR(L2.Lambda_plus, 1.924847, 1e-6);
    EXPECT_NEAR(L2.Lambda_zero, 0.962424, 1e-6);

    const LyapunovData L3 = lyapunov_data(diamond(golden, M2(3, 2, 1, 1)));
    const double l2 = std::log(2 + std::sqrt(3.0));
    EXPECT_NEAR(L3.lambda_max, l2, 1e-12);
    EXPECT_NEAR(L3.lambda_max, 1.316958, 1e-6);
    EXPECT_NEAR(L3.Lambda_zero, (golden_exp - l2 / 2) + (l2 - l2 / 2), 1e-12);
    EXPECT_NEAR(L3.Lambda_zero, 0.962424, 1e-6);
}

TEST(Symplectic, EntropyBounds) {
    const EntropyBounds zero = entropy_bounds(lyapunov_data(-IntMatrix::Identity(2, 2)));
    EXPECT_EQ(zero.lower, 0.0);
    EXPECT_EQ(zero.ruelle_upper, 0.0);
    const EntropyBounds g = entropy_bounds(lyapunov_data(golden));
    EXPECT_NEAR(g.lower, 0.481212, 1e-6);
    EXPECT_NEAR(g.ruelle_upper, 0.962424, 1e-6);
}

TEST(Symplectic, InverseAndPowers) {
    const IntMatrix inv = symplectic_inverse(golden);
    EXPECT_EQ(IntMatrix(golden * inv), IntMatrix(IntMatrix::Identity(2, 2)));
    EXPECT_EQ(int_power(golden, 3), IntMatrix(golden * golden * golden));
    EXPECT_EQ(IntMatrix(int_power(golden, -2) * int_power(golden, 2)), IntMatrix(IntMatrix::Identity(2, 2)));
    EXPECT_EQ(int_power(golden, 0), IntMatrix(IntMatrix::Identity(2, 2)));
}

TEST(Symplectic, ParseMatrix) {
    EXPECT_EQ(parse_int_matrix("2,1;1,1"), golden);
    EXPECT_EQ(parse_int_matrix(" -1, 0 ; 0, -1"), IntMatrix(-IntMatrix::Identity(2, 2)));
    EXPECT_THROW(parse_int_matrix("2,1;1"), ValidationError);
    EXPECT_THROW(parse_int_matrix("2,x;1,1"), ValidationError);
}

TEST(Symplectic, AdaptedScalingGoldenIsIsotropic) {
    const AdaptedFrame F = adapted_frame(golden);
    EXPECT_LT(symplectic_defect(F.Q), 1e-12);
    const double hbar = 1.0 / (two_pi * 32);
    const RMatrix B = adapted_scaling_matrix(F, hbar);
    EXPECT_LT((B - std::pow(hbar, -0.5) * RMatrix::Identity(2, 2)).norm() / B.norm(), 1e-12);
    EXPECT_NEAR(B.determinant(), 1.0 / hbar, 1e-9 / hbar);
}

TEST(Symplectic, NeutralExponentScalesWithEpsilon0) {
    const IntMatrix A = diamond(golden, IntMatrix(IntMatrix::Identity(2, 2)));
    const double hbar = 1.0 / (two_pi * 64);
    const RMatrix B1 = adapted_scaling_matrix(adapted_frame(A, 0.05), hbar);
    const RMatrix B2 = adapted_scaling_matrix(adapted_frame(A, 0.10), hbar);
    // neutral coordinate is x_2: gamma_0 = eps0 / (2 lambda_max)
    const double g1 = -std::log(B1(1, 1)) / std::log(hbar), g2 = -std::log(B2(1, 1)) / std::log(hbar);
    EXPECT_NEAR(g1, 0.05 / (2 * golden_exp), 1e-12);
    EXPECT_NEAR(g2 / g1, 2.0, 1e-12);
}

TEST(Symplectic, InverseScalingDecaysLikeHbarGamma) {
    const AdaptedFrame F = adapted_frame(golden);
    std::vector<double> x, y;
    for (int N = 16; N <= 256; N *= 2) {
        const double hbar = 1.0 / (two_pi * N);
        const RMatrix Binv = adapted_scaling_matrix(F, hbar).inverse();
        x.push_back(std::log(hbar));
        y.push_back(std::log(Binv.cwiseAbs().rowwise().sum().maxCoeff()));
    }
    const double slope = (y.back() - y.front()) / (x.back() - x.front());
    EXPECT_NEAR(slope, 0.5, 1e-9);
}

TEST(Symplectic, EhrenfestTimes) {
    const LyapunovData L = lyapunov_data(golden);
    const EhrenfestTimes t = ehrenfest_times(128, 0.1, L);
    EXPECT_EQ(t.m_E, 2);
    EXPECT_EQ(t.n_E, 6);
    EXPECT_EQ(ehrenfest_times(64, 0.1, L).m_E, 1);
    const EhrenfestTimes z = ehrenfest_times(128, 0.999999, L);
    EXPECT_EQ(z.m_E, 0);
    EXPECT_EQ(z.n_E, 0);
}

TEST(Symplectic, ClassicalPeriod) {
    EXPECT_EQ(classical_period(golden, 2), 3);
    const int P = classical_period(golden, 32);
    EXPECT_GT(P, 0);
    EXPECT_EQ(int_power(golden, P).unaryExpr([](std::int64_t v) { return mod_floor(v, 32); }), IntMatrix(IntMatrix::Identity(2, 2)));
}
