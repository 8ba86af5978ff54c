#pragma once

#include "catmap/core.hpp"
#include "catmap/symplectic.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <map>
#include <set>

namespace catmap {

// The Hilbert space H_N(kappa) on T^{2d}. kappa = (kappa1[0..d), kappa2[0..d)), reduced to [0, 2pi).
struct QuantumTorus {
    int N = 1;
    int d = 1;
    std::vector<double> kappa;

    QuantumTorus() = default;
    QuantumTorus(int N_, int d_, std::vector<double> k = {}) : N(N_), d(d_), kappa(std::move(k)) {
        if (N <= 0) throw ValidationError("N must be positive");
        if (d <= 0) throw ValidationError("d must be positive");
        if (kappa.empty()) kappa.assign(2 * d, 0.0);
        if (static_cast<int>(kappa.size()) != 2 * d) throw DimensionError("kappa must have 2d entries");
        for (double& k_ : kappa) k_ = wrap_angle(k_);
    }

    double hbar() const { return 1.0 / (two_pi * N); }
    std::int64_t dim() const { return ipow(N, d); }
    double kappa1(int i) const { return kappa[i]; }
    double kappa2(int i) const { return kappa[d + i]; }
};

struct TorusState {
    QuantumTorus torus;
    CVector coeffs;
};

struct TorusOperator {
    QuantumTorus torus;
    CMatrix matrix;
};

// An operator with one nonzero per row: (X c)_k = phase[k] * c[src[k]].
struct MonomialOp {
    std::vector<std::int64_t> src;
    std::vector<cplx> phase;

    std::int64_t size() const { return static_cast<std::int64_t>(src.size()); }

    CMatrix dense() const {
        CMatrix M = CMatrix::Zero(size(), size());
        for (std::int64_t k = 0; k < size(); ++k) M(k, src[k]) = phase[k];
        return M;
    }

    CVector apply(const CVector& c) const {
        CVector out(size());
        for (std::int64_t k = 0; k < size(); ++k) out(k) = phase[k] * c(src[k]);
        return out;
    }

    // Accumulate coeff * X into the dense matrix M.
    void add_to(CMatrix& M, cplx coeff) const {
        for (std::int64_t k = 0; k < size(); ++k) M(k, src[k]) += coeff * phase[k];
    }

    friend MonomialOp operator*(const MonomialOp& X, const MonomialOp& Y) {
        MonomialOp Z;
        Z.src.resize(X.src.size());
        Z.phase.resize(X.src.size());
        for (size_t k = 0; k < X.src.size(); ++k) {
            Z.src[k] = Y.src[X.src[k]];
            Z.phase[k] = X.phase[k] * Y.phase[X.src[k]];
        }
        return Z;
    }
};

// U(r/N) on one coordinate pair, r = (a, b). Coefficients c_j sit at y_j = (j + theta2)/N with
// quasi-periodic extension c_{j+N} = e^{i kappa1} c_j; kappa may be unreduced.
inline MonomialOp translation_1d(int N, double kappa1, double kappa2, std::int64_t a, std::int64_t b) {
    MonomialOp X;
    X.src.resize(N);
    X.phase.resize(N);
    const double theta2 = kappa2 / two_pi;
    const cplx global = exp_i_pi_rational(-a * b, N) * std::polar(1.0, two_pi * static_cast<double>(b) * theta2 / N);
    for (std::int64_t k = 0; k < N; ++k) {
        const std::int64_t j = k - a;
        const std::int64_t s = floor_div(j, N);
        X.src[k] = j - s * N;
        X.phase[k] = global * exp_i_pi_rational(2 * mod_floor(b * k, N), N) * std::polar(1.0, kappa1 * static_cast<double>(s));
    }
    return X;
}

// Tensor product in row-major order, coordinate 0 most significant.
inline MonomialOp tensor(const std::vector<MonomialOp>& parts) {
    MonomialOp X;
    X.src = {0};
    X.phase = {cplx(1.0)};
    for (const auto& P : parts) {
        MonomialOp Y;
        const std::int64_t n = P.size();
        Y.src.resize(X.size() * n);
        Y.phase.resize(X.size() * n);
        for (std::int64_t i = 0; i < X.size(); ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                Y.src[i * n + j] = X.src[i] * n + P.src[j];
                Y.phase[i * n + j] = X.phase[i] * P.phase[j];
            }
        X = std::move(Y);
    }
    return X;
}

inline MonomialOp translation_monomial(const QuantumTorus& qt, const Lattice& r) {
    if (static_cast<int>(r.size()) != 2 * qt.d) throw DimensionError("translation: r must have 2d entries");
    std::vector<MonomialOp> parts;
    for (int i = 0; i < qt.d; ++i) parts.push_back(translation_1d(qt.N, qt.kappa1(i), qt.kappa2(i), r[i], r[qt.d + i]));
    return tensor(parts);
}

inline CMatrix translation(const QuantumTorus& qt, const Lattice& r) { return translation_monomial(qt, r).dense(); }

// sigma(r, r') = <r, J r'>.
inline std::int64_t symplectic_form(const Lattice& r, const Lattice& s) {
    const size_t d = r.size() / 2;
    std::int64_t v = 0;
    for (size_t i = 0; i < d; ++i) v += r[d + i] * s[i] - r[i] * s[d + i];
    return v;
}

// The phase in U(r/N) U(s/N) = e^{(i/2hbar) sigma(r/N, s/N)} U((r+s)/N), which is e^{i pi sigma(r,s)/N}.
inline cplx heisenberg_phase(const Lattice& r, const Lattice& s, int N) { return exp_i_pi_rational(symplectic_form(r, s), N); }

// ---------------------------------------------------------------------------------------------
// Coherent states

// Coefficients of |rho, kappa> on one coordinate pair, without normalization.
inline CVector coherent_1d(int N, double kappa1, double kappa2, double x, double xi, double tail_tol) {
    const double theta2 = kappa2 / two_pi;
    const double hbar = 1.0 / (two_pi * N);
    const double pref = std::pow(pi * hbar, -0.25) / std::sqrt(static_cast<double>(N));
    const double reach = std::sqrt(-std::log(tail_tol) / (pi * N));
    const cplx front = std::polar(pref, -pi * N * xi * x);
    CVector v = CVector::Zero(N);
    for (int k = 0; k < N; ++k) {
        const double y = (k + theta2) / N;
        const auto n_lo = static_cast<std::int64_t>(std::ceil(y - x - reach));
        const auto n_hi = static_cast<std::int64_t>(std::floor(y - x + reach));
        cplx acc = 0;
        for (std::int64_t n = n_lo; n <= n_hi; ++n) {
            const double u = y - static_cast<double>(n);
            const double g = std::exp(-pi * N * (u - x) * (u - x));
            // e^{i kappa1 n} e^{2 pi i N xi u}, with N u = k + theta2 - N n.
            const double ph = kappa1 * static_cast<double>(n) + two_pi * xi * (k + theta2 - static_cast<double>(N) * n);
            acc += g * std::polar(1.0, ph);
        }
        v(k) = front * acc;
    }
    return v;
}

inline CVector kron(const CVector& a, const CVector& b) {
    CVector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

inline CVector coherent_state(const QuantumTorus& qt, const std::vector<double>& rho, double tail_tol = 1e-14,
                              bool normalize = true) {
    if (static_cast<int>(rho.size()) != 2 * qt.d) throw DimensionError("coherent_state: rho must have 2d entries");
    if (!(tail_tol > 0)) throw ValidationError("coherent_state: tail_tol must be positive");
    CVector v = CVector::Ones(1);
    for (int i = 0; i < qt.d; ++i)
        v = kron(v, coherent_1d(qt.N, qt.kappa1(i), qt.kappa2(i), rho[i], rho[qt.d + i], tail_tol));
    if (normalize) v /= v.norm();
    return v;
}

// ---------------------------------------------------------------------------------------------
// Metaplectic generators on one coordinate pair.

enum class Generator { chirp, S, S_inv };

struct GeneratorStep {
    Generator kind;
    std::int64_t c = 0;  // chirp parameter for L_c = [[1,0],[c,1]]
};

inline IntMatrix generator_matrix(const GeneratorStep& g) {
    IntMatrix M(2, 2);
    switch (g.kind) {
        case Generator::chirp: M << 1, 0, g.c, 1; break;
        case Generator::S: M << 0, -1, 1, 0; break;
        case Generator::S_inv: M << 0, 1, -1, 0; break;
    }
    return M;
}

inline GeneratorStep inverse(const GeneratorStep& g) {
    switch (g.kind) {
        case Generator::chirp: return {Generator::chirp, -g.c};
        case Generator::S: return {Generator::S_inv, 0};
        case Generator::S_inv: return {Generator::S, 0};
    }
    return g;
}

// A word h_1, ..., h_L (in order of application) with A = h_L ... h_1, found by Euclid on
// the first column.
inline std::vector<GeneratorStep> sl2_word(const IntMatrix& A) {
    if (A.rows() != 2 || A.cols() != 2 || int_determinant(A) != 1) throw ValidationError("sl2_word: need a matrix in SL(2,Z)");
    std::vector<GeneratorStep> reduce;  // W = g_n ... g_1 with W A = Id
    IntMatrix cur = A;
    auto push = [&](GeneratorStep g) {
        reduce.push_back(g);
        cur = generator_matrix(g) * cur;
    };
    while (cur(1, 0) != 0) {
        if (cur(0, 0) != 0) {
            // round(c / a), computed in integers
            const std::int64_t a = cur(0, 0), c = cur(1, 0);
            std::int64_t k = -floor_div(2 * c + a, 2 * a);
            if (k != 0) push({Generator::chirp, k});
            if (cur(1, 0) == 0) break;
        }
        push({Generator::S_inv, 0});
    }
    if (cur(0, 0) == -1) {
        push({Generator::S, 0});
        push({Generator::S, 0});
    }
    if (cur(0, 0) != 1 || cur(1, 1) != 1) throw ConstructionFailure("sl2_word: reduction did not reach an upper shear");
    const std::int64_t b = cur(0, 1);
    if (b != 0) {
        // [[1,-b],[0,1]] = S L_b S^{-1}
        push({Generator::S_inv, 0});
        push({Generator::chirp, b});
        push({Generator::S, 0});
    }
    if (cur != IntMatrix::Identity(2, 2)) throw ConstructionFailure("sl2_word: reduction failed");
    std::vector<GeneratorStep> word;
    for (auto it = reduce.rbegin(); it != reduce.rend(); ++it) word.push_back(inverse(*it));
    // A = g_1^{-1} ... g_n^{-1}: the first factor applied is g_n^{-1}.
    return word;
}

// Matrix of one generator mapping H_N(kappa) to H_N(kappa'), kappa updated in place (unreduced).
inline CMatrix generator_operator(const GeneratorStep& g, int N, double& kappa1, double& kappa2) {
    const double th1 = kappa1 / two_pi, th2 = kappa2 / two_pi;
    const double nrm = 1.0 / std::sqrt(static_cast<double>(N));
    CMatrix M = CMatrix::Zero(N, N);
    switch (g.kind) {
        case Generator::chirp: {
            for (int k = 0; k < N; ++k) {
                // e^{i pi c (k + theta2)^2 / N}; the integer part of the square is reduced exactly.
                M(k, k) = exp_i_pi_rational(mod_floor(g.c * k * k, 2 * N), N) *
                          std::polar(1.0, pi * static_cast<double>(g.c) * (2.0 * k * th2 + th2 * th2) / N);
            }
            const double new1 = kappa1 + static_cast<double>(g.c) * kappa2 + pi * N * static_cast<double>(g.c);
            kappa1 = new1;
            break;
        }
        case Generator::S: {
            for (int k = 0; k < N; ++k)
                for (int j = 0; j < N; ++j) {
                    const double rest = two_pi * (k * th2 - th1 * j - th1 * th2) / N;
                    M(k, j) = std::polar(nrm, two_pi * static_cast<double>(mod_floor(static_cast<std::int64_t>(k) * j, N)) / N + rest);
                }
            const double n1 = kappa2, n2 = -kappa1;
            kappa1 = n1;
            kappa2 = n2;
            break;
        }
        case Generator::S_inv: {
            for (int k = 0; k < N; ++k)
                for (int j = 0; j < N; ++j) {
                    const double rest = -two_pi * (k * th2 + th1 * j + th1 * th2) / N;
                    M(k, j) = std::polar(nrm, -two_pi * static_cast<double>(mod_floor(static_cast<std::int64_t>(k) * j, N)) / N + rest);
                }
            const double n1 = -kappa2, n2 = kappa1;
            kappa1 = n1;
            kappa2 = n2;
            break;
        }
    }
    return M;
}

// Relabel coefficients stored at y = (j + theta2 + m)/N to y = (j + theta2)/N.
inline CMatrix relabel_operator(int N, double kappa1, std::int64_t m) {
    CMatrix R = CMatrix::Zero(N, N);
    for (std::int64_t j = 0; j < N; ++j) {
        const std::int64_t t = j - m;
        const std::int64_t s = floor_div(t, N);
        R(j, t - s * N) = std::polar(1.0, kappa1 * static_cast<double>(s));
    }
    return R;
}

inline void fix_global_phase(CMatrix& M) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
        if (std::abs(M(0, j)) > 1e-8) {
            M *= std::conj(M(0, j)) / std::abs(M(0, j));
            return;
        }
    }
}

struct Propagator1D {
    CMatrix matrix;
    double kappa1_out = 0, kappa2_out = 0;  // unreduced image of the input kappa
};

// Chain the generator word; no consistency requirement on kappa is imposed here.
inline Propagator1D propagate_word(const std::vector<GeneratorStep>& word, int N, double kappa1, double kappa2) {
    Propagator1D P;
    P.matrix = CMatrix::Identity(N, N);
    for (const auto& g : word) P.matrix = generator_operator(g, N, kappa1, kappa2) * P.matrix;
    P.kappa1_out = kappa1;
    P.kappa2_out = kappa2;
    return P;
}

inline double intertwining_defect(const CMatrix& M, const IntMatrix& A, const QuantumTorus& qt);

inline CMatrix propagator_1d(const IntMatrix& A, int N, double kappa1, double kappa2) {
    const auto word = sl2_word(A);
    Propagator1D P = propagate_word(word, N, kappa1, kappa2);
    const double shift1 = (P.kappa1_out - kappa1) / two_pi;
    const double shift2 = (P.kappa2_out - kappa2) / two_pi;
    if (std::abs(shift1 - std::round(shift1)) > 1e-9 || std::abs(shift2 - std::round(shift2)) > 1e-9)
        throw ConstructionFailure("kappa is not invariant under A: propagator leaves H_N(kappa)");
    const auto m = static_cast<std::int64_t>(std::llround(shift2));
    CMatrix M = m != 0 ? CMatrix(relabel_operator(N, kappa1, m) * P.matrix) : P.matrix;
    fix_global_phase(M);
    return M;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// M_kappa(A) with M U(r/N) M^{-1} = U(A r / N). Verified before returning.
inline CMatrix propagator(const IntMatrix& A, const QuantumTorus& qt, double tol = 1e-8) {
    require_quantizable(A);
    if (half_dim(A) != qt.d) throw DimensionError("propagator: A and torus dimension differ");
    auto blocks = pair_blocks(A);
    if (!blocks) throw UnsupportedFrameError("propagator: d > 1 requires pair-block (diamond) form");
    CMatrix M = CMatrix::Ones(1, 1);
    for (int i = 0; i < qt.d; ++i) M = kron(M, propagator_1d((*blocks)[i], qt.N, qt.kappa1(i), qt.kappa2(i)));
    const double defect = intertwining_defect(M, A, qt);
    if (defect > tol)
        throw ConstructionFailure("intertwining defect " + std::to_string(defect) + " exceeds tolerance");
    return M;
}

inline Lattice column(const IntMatrix& A, int k) {
    Lattice r(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) r[i] = A(i, k);
    return r;
}

inline Lattice mat_vec(const IntMatrix& A, const Lattice& r) {
    Lattice s(A.rows(), 0);
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) s[i] += A(i, j) * r[j];
    return s;
}

struct IntertwiningReport {
    double max_defect = 0;
    int worst_generator = -1;
};

inline IntertwiningReport check_intertwining_report(const CMatrix& M, const IntMatrix& A, const QuantumTorus& qt) {
    IntertwiningReport rep;
    const int n = 2 * qt.d;
    for (int k = 0; k < n; ++k) {
        Lattice e(n, 0);
        e[k] = 1;
        CMatrix lhs = M * translation(qt, e) * M.adjoint();
        CMatrix rhs = translation(qt, column(A, k));
        double def = op_norm(lhs - rhs);
        if (def > rep.max_defect) {
            rep.max_defect = def;
            rep.worst_generator = k;
        }
    }
    return rep;
}

inline double intertwining_defect(const CMatrix& M, const IntMatrix& A, const QuantumTorus& qt) {
    return check_intertwining_report(M, A, qt).max_defect;
}

inline double check_intertwining(const CMatrix& M, const IntMatrix& A, const QuantumTorus& qt) {
    return intertwining_defect(M, A, qt);
}

// ---------------------------------------------------------------------------------------------
// Invariant kappa.
//
// On H_N(kappa), U(n) acts as e^{i phi(n)} with phi(n) = pi N <n_q, n_p> + <k, n> and
// k = (-kappa1, kappa2). Conjugating by M(A) gives phi'(n) = phi(A^{-1} n). Writing
// A^{-1} = [[a, b], [c, d]], phi(A^{-1} n) = pi N <n_q, n_p> + pi N <v, n> + <A^{-T} k, n> mod 2pi
// with v = (diag(a^T c), diag(b^T d)). Invariance is (I - A^{-T}) k = pi N v mod 2pi.

inline double kappa_phase(const std::vector<double>& kappa, const Lattice& n, int N) {
    const size_t d = n.size() / 2;
    double ph = 0;
    std::int64_t qp = 0;
    for (size_t i = 0; i < d; ++i) {
        qp += n[i] * n[d + i];
        ph += -kappa[i] * static_cast<double>(n[i]) + kappa[d + i] * static_cast<double>(n[d + i]);
    }
    return ph + pi * static_cast<double>(mod_floor(static_cast<std::int64_t>(N) * qp, 2));
}

// Residual of the defining condition, tested on e_i and e_i + e_j.
inline double kappa_condition_defect(const IntMatrix& A, const std::vector<double>& kappa, int N) {
    const int n = static_cast<int>(A.rows());
    const IntMatrix Ainv = symplectic_inverse(A);
    double worst = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            Lattice v(n, 0);
            v[i] += 1;
            if (j != i) v[j] += 1;
            double diff = kappa_phase(kappa, mat_vec(Ainv, v), N) - kappa_phase(kappa, v, N);
            double r = std::abs(std::remainder(diff, two_pi));
            worst = std::max(worst, r);
        }
    return worst;
}

inline std::vector<std::vector<double>> kappa_candidates(const IntMatrix& A, int N) {
    const int d = half_dim(A);
    const int n = 2 * d;
    const IntMatrix Ainv = symplectic_inverse(A);
    const IntMatrix L = IntMatrix::Identity(n, n) - Ainv.transpose();
    const std::int64_t det = int_determinant(L);
    if (det == 0) throw NotQuantizableError("find_kappa: A - I is singular");
    const std::int64_t D = std::abs(det);
    if (D > 4000000) throw BudgetExceededError("find_kappa: |det(A - I)| too large to enumerate");
    // adj(L) = det * L^{-1}, exact after rounding for small matrices.
    RMatrix Linv = L.cast<double>().inverse();
    IntMatrix adj(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) adj(i, j) = std::llround(Linv(i, j) * static_cast<double>(det));
    if (L * adj != det * IntMatrix::Identity(n, n)) throw ConsistencyFailure("find_kappa: adjugate is inexact");
    const std::int64_t sgn = det > 0 ? 1 : -1;
    IntVector v(n);
    for (int i = 0; i < d; ++i) {
        std::int64_t s1 = 0, s2 = 0;
        for (int k = 0; k < d; ++k) {
            s1 += Ainv(k, i) * Ainv(d + k, i);          // (a^T c)_{ii}
            s2 += Ainv(k, d + i) * Ainv(d + k, d + i);  // (b^T d)_{ii}
        }
        v(i) = s1;
        v(d + i) = s2;
    }
    // t = L^{-1}(N v / 2 + z) mod 1, written as u / (2D).
    const std::int64_t den = 2 * D;
    auto reduce = [&](IntVector u) {
        for (int i = 0; i < n; ++i) u(i) = mod_floor(u(i), den);
        return u;
    };
    IntVector u0 = reduce(sgn * (adj * (static_cast<std::int64_t>(N) * v)));
    std::vector<IntVector> gens;
    for (int i = 0; i < n; ++i) gens.push_back(reduce(2 * sgn * IntVector(adj.col(i))));
    auto key = [&](const IntVector& u) { return std::vector<std::int64_t>(u.data(), u.data() + n); };
    std::set<std::vector<std::int64_t>> seen;
    std::vector<IntVector> frontier{IntVector::Zero(n)}, all;
    seen.insert(key(frontier[0]));
    while (!frontier.empty()) {
        std::vector<IntVector> next;
        for (const auto& u : frontier) {
            all.push_back(u);
            for (const auto& g : gens) {
                IntVector w = reduce(u + g);
                if (seen.insert(key(w)).second) next.push_back(w);
            }
        }
        frontier = std::move(next);
    }
    std::vector<std::vector<double>> out;
    for (const auto& g : all) {
        IntVector u = reduce(u0 + g);
        std::vector<double> kappa(n);
        for (int i = 0; i < d; ++i) {
            kappa[i] = wrap_angle(-two_pi * static_cast<double>(u(i)) / static_cast<double>(den));
            kappa[d + i] = wrap_angle(two_pi * static_cast<double>(u(d + i)) / static_cast<double>(den));
        }
        out.push_back(kappa);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Every returned kappa is verified: by building M(A) and testing intertwining when A is in
// pair-block form, otherwise by the defining phase condition.
inline std::vector<std::vector<double>> find_kappa(const IntMatrix& A, int N) {
    require_quantizable(A);
    if (N <= 0) throw ValidationError("N must be positive");
    const int d = half_dim(A);
    const bool blocky = pair_blocks(A).has_value();
    std::vector<std::vector<double>> verified;
    for (const auto& kappa : kappa_candidates(A, N)) {
        if (kappa_condition_defect(A, kappa, N) > 1e-9) continue;
        if (blocky && ipow(N, d) <= 256) {
            try {
                propagator(A, QuantumTorus(N, d, kappa));
            } catch (const ConstructionFailure&) {
                continue;
            }
        }
        verified.push_back(kappa);
    }
    if (verified.empty()) throw ConsistencyFailure("find_kappa: no candidate survived verification");
    return verified;
}

// Prefer kappa = 0 when it is admissible, otherwise the first verified candidate.
inline std::vector<double> default_kappa(const IntMatrix& A, int N) {
    const int d = half_dim(A);
    std::vector<double> zero(2 * d, 0.0);
    if (check_quantizable(A) && kappa_condition_defect(A, zero, N) <= 1e-12) return zero;
    return find_kappa(A, N).front();
}

inline CMatrix matrix_power(const CMatrix& M, int t) {
    CMatrix base = t >= 0 ? M : CMatrix(M.adjoint());
    CMatrix R = CMatrix::Identity(M.rows(), M.cols());
    for (int i = 0; i < std::abs(t); ++i) R = base * R;
    return R;
}

}  // namespace catmap
