#pragma once

#include "catmap/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <optional>
#include <sstream>

namespace catmap {

// J = [[0, -I], [I, 0]], so that sigma(rho, rho') = <rho, J rho'>.
template <class Mat = IntMatrix>
Mat standard_J(int d) {
    Mat J = Mat::Zero(2 * d, 2 * d);
    for (int i = 0; i < d; ++i) {
        J(i, d + i) = -1;
        J(d + i, i) = 1;
    }
    return J;
}

inline int half_dim(const IntMatrix& M) {
    if (M.rows() != M.cols() || M.rows() % 2 != 0 || M.rows() == 0)
        throw DimensionError("expected a square matrix of even side, got " +
                             std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
    return static_cast<int>(M.rows() / 2);
}

inline bool check_symplectic(const IntMatrix& M) {
    int d = half_dim(M);
    IntMatrix J = standard_J(d);
    return (M.transpose() * J * M - J).cwiseAbs().maxCoeff() == 0;
}

// Exact integer determinant (fraction-free Bareiss elimination).
inline std::int64_t int_determinant(IntMatrix M) {
    const Eigen::Index n = M.rows();
    if (n == 0) return 1;
    std::int64_t sign = 1;
    __int128 prev = 1;
    std::vector<std::vector<__int128>> a(n, std::vector<__int128>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a[i][j] = M(i, j);
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
        if (a[k][k] == 0) {
            Eigen::Index p = k + 1;
            while (p < n && a[p][k] == 0) ++p;
            if (p == n) return 0;
            std::swap(a[p], a[k]);
            sign = -sign;
        }
        for (Eigen::Index i = k + 1; i < n; ++i)
            for (Eigen::Index j = k + 1; j < n; ++j)
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
        prev = a[k][k];
    }
    return sign * static_cast<std::int64_t>(a[n - 1][n - 1]);
}

inline bool check_quantizable(const IntMatrix& M) {
    return int_determinant(M - IntMatrix::Identity(M.rows(), M.cols())) != 0;
}

inline void require_symplectic(const IntMatrix& A) {
    if (!check_symplectic(A)) throw ValidationError("matrix is not symplectic");
}

inline void require_quantizable(const IntMatrix& A) {
    require_symplectic(A);
    if (!check_quantizable(A))
        throw NotQuantizableError("1 is an eigenvalue of A (det(A - I) = 0)");
}

// A^{-1} = -J A^T J for symplectic A, exact.
inline IntMatrix symplectic_inverse(const IntMatrix& A) {
    IntMatrix J = standard_J(half_dim(A));
    return -J * A.transpose() * J;
}

inline IntMatrix int_power(const IntMatrix& A, int t) {
    IntMatrix base = t >= 0 ? A : symplectic_inverse(A);
    IntMatrix R = IntMatrix::Identity(A.rows(), A.cols());
    for (int i = 0; i < std::abs(t); ++i) R = base * R;
    return R;
}

inline IntMatrix parse_int_matrix(const std::string& text) {
    std::vector<std::vector<std::int64_t>> rows;
    std::stringstream all(text);
    std::string row;
    while (std::getline(all, row, ';')) {
        std::vector<std::int64_t> vals;
        std::stringstream rs(row);
        std::string cell;
        while (std::getline(rs, cell, ',')) {
            try {
                size_t used = 0;
                vals.push_back(std::stoll(cell, &used));
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ValidationError("matrix: cannot parse entry '" + cell + "'");
            }
        }
        rows.push_back(vals);
    }
    if (rows.empty()) throw ValidationError("matrix: empty");
    IntMatrix M(rows.size(), rows[0].size());
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ValidationError("matrix: ragged rows");
        for (size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
    }
    return M;
}

// The diamond product: x-coordinates of M1 then M2, followed by their xi-coordinates.
template <class Mat>
Mat diamond(const Mat& M1, const Mat& M2) {
    if (M1.rows() != M1.cols() || M1.rows() % 2 || M2.rows() != M2.cols() || M2.rows() % 2)
        throw DimensionError("diamond: both factors must be square of even side");
    const Eigen::Index a = M1.rows() / 2, b = M2.rows() / 2, n = a + b;
    Mat R = Mat::Zero(2 * n, 2 * n);
    for (int bi = 0; bi < 2; ++bi)
        for (int bj = 0; bj < 2; ++bj) {
            R.block(bi * n, bj * n, a, a) = M1.block(bi * a, bj * a, a, a);
            R.block(bi * n + a, bj * n + a, b, b) = M2.block(bi * b, bj * b, b, b);
        }
    return R;
}

// If A only couples each coordinate pair (x_i, xi_i) with itself, return the 2x2 blocks.
inline std::optional<std::vector<IntMatrix>> pair_blocks(const IntMatrix& A) {
    int d = half_dim(A);
    for (int i = 0; i < 2 * d; ++i)
        for (int j = 0; j < 2 * d; ++j)
            if (i % d != j % d && A(i, j) != 0) return std::nullopt;
    std::vector<IntMatrix> blocks;
    for (int i = 0; i < d; ++i) {
        IntMatrix B(2, 2);
        B << A(i, i), A(i, d + i), A(d + i, i), A(d + i, d + i);
        blocks.push_back(B);
    }
    return blocks;
}

struct LyapunovData {
    std::vector<double> exponents;  // distinct, increasing
    std::vector<int> multiplicities;
    int neutral_halfdim = 0;
    double lambda_max = 0.0;
    double Lambda_plus = 0.0;
    double Lambda_zero = 0.0;

    int d() const {
        int s = neutral_halfdim;
        for (int m : multiplicities) s += m;
        return s;
    }
};

inline LyapunovData make_lyapunov_data(std::vector<double> exponents, std::vector<int> multiplicities,
                                       int neutral_halfdim) {
    if (exponents.size() != multiplicities.size())
        throw ValidationError("lyapunov data: exponents and multiplicities differ in length");
    LyapunovData L;
    L.exponents = std::move(exponents);
    L.multiplicities = std::move(multiplicities);
    L.neutral_halfdim = neutral_halfdim;
    for (size_t i = 0; i < L.exponents.size(); ++i) {
        if (L.exponents[i] <= 0 || L.multiplicities[i] <= 0 || (i > 0 && L.exponents[i] <= L.exponents[i - 1]))
            throw ValidationError("lyapunov data: exponents must be positive and increasing");
    }
    L.lambda_max = L.exponents.empty() ? 0.0 : L.exponents.back();
    for (size_t i = 0; i < L.exponents.size(); ++i) {
        L.Lambda_plus += L.multiplicities[i] * L.exponents[i];
        L.Lambda_zero += L.multiplicities[i] * std::max(L.exponents[i] - L.lambda_max / 2, 0.0);
    }
    return L;
}

inline std::vector<double> eigenvalue_moduli(const IntMatrix& A) {
    Eigen::EigenSolver<RMatrix> es(A.cast<double>(), false);
    std::vector<double> mod;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mod.push_back(std::abs(es.eigenvalues()(i)));
    std::sort(mod.begin(), mod.end());
    return mod;
}

// Moduli within neutral_tol of 1 are neutral. Defective unit-modulus eigenvalues (shears)
// are perturbed by O(sqrt(eps)) in floating point, hence the looser neutral band.
inline LyapunovData lyapunov_data(const IntMatrix& A, double cluster_tol = 1e-8, double neutral_tol = 1e-6) {
    require_symplectic(A);
    const int d = half_dim(A);
    std::vector<double> mod = eigenvalue_moduli(A);
    int neutral = 0;
    std::vector<double> logs;
    for (double m : mod) {
        double dev = std::abs(m - 1.0);
        if (dev <= neutral_tol) {
            ++neutral;
        } else if (dev <= 10 * neutral_tol) {
            throw IllConditionedSpectrumError("eigenvalue modulus " + std::to_string(m) + " is ambiguously close to 1");
        } else if (m > 1.0) {
            logs.push_back(std::log(m));
        }
    }
    if (neutral % 2 != 0) throw IllConditionedSpectrumError("odd number of neutral eigenvalues");
    std::vector<double> exps;
    std::vector<int> mult;
    for (double l : logs) {
        if (!exps.empty() && std::abs(l - exps.back()) <= cluster_tol * std::max(1.0, l)) {
            ++mult.back();
        } else {
            exps.push_back(l);
            mult.push_back(1);
        }
    }
    // Re-average each cluster so the exponent is the mean of its members.
    size_t pos = 0;
    for (size_t c = 0; c < exps.size(); ++c) {
        double s = 0;
        for (int k = 0; k < mult[c]; ++k) s += logs[pos + k];
        exps[c] = s / mult[c];
        pos += mult[c];
    }
    LyapunovData L = make_lyapunov_data(exps, mult, neutral / 2);
    if (L.d() != d) throw IllConditionedSpectrumError("stable and unstable counts do not balance");
    return L;
}

struct EntropyBounds {
    double lower = 0.0;
    double ruelle_upper = 0.0;
};

inline EntropyBounds entropy_bounds(const LyapunovData& L) { return {L.Lambda_zero, L.Lambda_plus}; }

struct FrameBlock {
    int halfdim = 1;
    double exponent = 0.0;  // 0 marks a neutral block
};

struct AdaptedFrame {
    RMatrix Q;
    std::vector<FrameBlock> blocks;  // in coordinate order
    double epsilon0 = 0.05;

    int d() const { return static_cast<int>(Q.rows() / 2); }
    double lambda_max() const {
        double m = 0;
        for (const auto& b : blocks) m = std::max(m, b.exponent);
        return m;
    }
};

inline double symplectic_defect(const RMatrix& Q) {
    const int d = static_cast<int>(Q.rows() / 2);
    RMatrix J = standard_J<RMatrix>(d);
    return (Q.transpose() * J * Q - J).cwiseAbs().maxCoeff();
}

inline AdaptedFrame make_frame(const RMatrix& Q, std::vector<FrameBlock> blocks, double epsilon0) {
    if (Q.rows() != Q.cols() || Q.rows() % 2) throw DimensionError("frame: Q must be square of even side");
    if (symplectic_defect(Q) > 1e-10) throw UnsupportedFrameError("frame: Q is not symplectic to 1e-10");
    int s = 0;
    for (const auto& b : blocks) {
        if (b.halfdim <= 0 || b.exponent < 0) throw ValidationError("frame: invalid block");
        s += b.halfdim;
    }
    if (s != Q.rows() / 2) throw DimensionError("frame: block half-dimensions do not sum to d");
    if (!(epsilon0 > 0)) throw ValidationError("frame: epsilon0 must be positive");
    return {Q, std::move(blocks), epsilon0};
}

inline void check_frame_against(const AdaptedFrame& F, const LyapunovData& L, double tol = 1e-8) {
    std::vector<double> f, l;
    for (const auto& b : F.blocks)
        for (int k = 0; k < b.halfdim; ++k) f.push_back(b.exponent);
    for (size_t i = 0; i < L.exponents.size(); ++i)
        for (int k = 0; k < L.multiplicities[i]; ++k) l.push_back(L.exponents[i]);
    for (int k = 0; k < L.neutral_halfdim; ++k) l.push_back(0.0);
    std::sort(f.begin(), f.end());
    std::sort(l.begin(), l.end());
    if (f.size() != l.size()) throw UnsupportedFrameError("frame: dimension mismatch with Lyapunov data");
    for (size_t i = 0; i < f.size(); ++i)
        if (std::abs(f[i] - l[i]) > tol * std::max(1.0, l[i]))
            throw UnsupportedFrameError("frame: block exponents do not match the spectrum of A");
}

inline double block_exponent_2x2(const IntMatrix& B) {
    double tr = static_cast<double>(B(0, 0) + B(1, 1));
    if (std::abs(tr) <= 2.0) return 0.0;
    double beta = (std::abs(tr) + std::sqrt(tr * tr - 4.0)) / 2.0;
    return std::log(beta);
}

// Frame for A: d = 1 uses the symplectically normalized unstable/stable eigenvectors;
// d >= 2 requires pair-block form and uses Q = Id.
inline AdaptedFrame adapted_frame(const IntMatrix& A, double epsilon0 = 0.05) {
    require_symplectic(A);
    const int d = half_dim(A);
    if (d == 1) {
        double lam = block_exponent_2x2(A);
        if (lam == 0.0) return make_frame(RMatrix::Identity(2, 2), {{1, 0.0}}, epsilon0);
        const double a = A(0, 0), b = A(0, 1), c = A(1, 0), dd = A(1, 1);
        const double tr = a + dd;
        const double s = tr > 0 ? 1.0 : -1.0;
        const double bu = s * (std::abs(tr) + std::sqrt(tr * tr - 4)) / 2, bs = 1.0 / bu;
        auto eigvec = [&](double beta) {
            Eigen::Vector2d v = std::abs(b) > std::abs(c) ? Eigen::Vector2d(b, beta - a) : Eigen::Vector2d(beta - dd, c);
            return Eigen::Vector2d(v / v.norm());
        };
        Eigen::Vector2d u = eigvec(bu), v = eigvec(bs);
        double det = u(0) * v(1) - u(1) * v(0);
        if (det < 0) {
            v = -v;
            det = -det;
        }
        RMatrix Q(2, 2);
        Q.col(0) = u / std::sqrt(det);
        Q.col(1) = v / std::sqrt(det);
        return make_frame(Q, {{1, lam}}, epsilon0);
    }
    auto blocks = pair_blocks(A);
    if (!blocks)
        throw UnsupportedFrameError("adapted_frame: d >= 2 requires a pair-block (diamond) form; supply Q explicitly");
    std::vector<FrameBlock> fb;
    for (const auto& B : *blocks) fb.push_back({1, block_exponent_2x2(B)});
    return make_frame(RMatrix::Identity(2 * d, 2 * d), fb, epsilon0);
}

// B(hbar) = Q diag(D1, D1) Q^{-1}, D1 = diag(hbar^{-gamma_j}) with gamma_j = lambda_j / (2 lambda_max)
// and gamma_0 = epsilon0 / (2 lambda_max) on neutral blocks.
inline RMatrix adapted_scaling_matrix(const AdaptedFrame& F, double hbar) {
    const double lmax = F.lambda_max();
    if (lmax <= 0) throw UnsupportedFrameError("purely neutral spectrum: no adapted scaling");
    if (!(hbar > 0)) throw ValidationError("hbar must be positive");
    const int d = F.d();
    RVector D(2 * d);
    int pos = 0;
    for (const auto& b : F.blocks) {
        double g = (b.exponent > 0 ? b.exponent : F.epsilon0) / (2 * lmax);
        for (int k = 0; k < b.halfdim; ++k, ++pos) {
            D(pos) = std::pow(hbar, -g);
            D(d + pos) = D(pos);
        }
    }
    return F.Q * D.asDiagonal() * F.Q.inverse();
}

struct EhrenfestTimes {
    int m_E = 0;
    int n_E = 0;
};

inline EhrenfestTimes ehrenfest_times(int N, double epsilon, const LyapunovData& L) {
    if (N <= 0) throw ValidationError("N must be positive");
    if (!(L.lambda_max > 0)) throw ValidationError("ehrenfest_times requires lambda_max > 0");
    const double logN = std::log(static_cast<double>(N));
    const double abs_log_hbar = std::log(two_pi * N);
    EhrenfestTimes t;
    t.m_E = static_cast<int>(std::floor((1 - epsilon) * logN / (2 * L.lambda_max)));
    t.n_E = static_cast<int>(std::floor((1 - epsilon) * abs_log_hbar / L.lambda_max));
    t.m_E = std::max(t.m_E, 0);
    t.n_E = std::max(t.n_E, 0);
    return t;
}

// Smallest P > 0 with A^P = Id mod N.
inline int classical_period(const IntMatrix& A, int N, int max_period = 100000) {
    IntMatrix R = IntMatrix::Identity(A.rows(), A.cols());
    for (int p = 1; p <= max_period; ++p) {
        R = A * R;
        for (Eigen::Index i = 0; i < R.size(); ++i) R.data()[i] = mod_floor(R.data()[i], N);
        if (R == IntMatrix::Identity(A.rows(), A.cols())) return p;
    }
    return -1;
}

}  // namespace catmap
