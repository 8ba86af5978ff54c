#pragma once

#include "catmap/quantization.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>

namespace catmap {

struct EigenData {
    RVector eigenphases;  // in [0, 2pi), ascending
    CMatrix eigenvectors;
    RVector residuals;
    std::vector<int> cluster;  // cluster id per column

    double max_residual() const { return residuals.size() ? residuals.maxCoeff() : 0.0; }
};

inline void normalize_phase(Eigen::Ref<CVector> v, double tol = 1e-8) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::abs(v(i)) > tol) {
            v *= std::conj(v(i)) / std::abs(v(i));
            return;
        }
}

// Orthonormal basis of span(V) that depends only on the subspace: Gram-Schmidt of the projected
// standard basis vectors, in index order.
inline CMatrix canonical_basis(const CMatrix& V, double tol = 1e-6) {
    const Eigen::Index n = V.rows(), k = V.cols();
    CMatrix out(n, k);
    Eigen::Index filled = 0;
    for (Eigen::Index j = 0; j < n && filled < k; ++j) {
        CVector w = V * V.row(j).adjoint();  // P e_j
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index c = 0; c < filled; ++c) w -= out.col(c) * out.col(c).dot(w);
        const double nw = w.norm();
        if (nw > tol) out.col(filled++) = w / nw;
    }
    if (filled < k) throw DecompositionFailure("could not build a canonical basis for a degenerate cluster");
    return out;
}

// Spectral decomposition of a unitary matrix via the complex Schur form. For a normal matrix the
// triangular factor is diagonal, so the Schur vectors are orthonormal eigenvectors.
inline EigenData eigensystem(const CMatrix& M, double cluster_tol = 1e-9, double residual_tol = 1e-8) {
    const Eigen::Index n = M.rows();
    if (unitarity_defect(M) > 1e-10) throw ValidationError("eigensystem: input is not unitary to 1e-10");
    Eigen::ComplexSchur<CMatrix> schur(M);
    if (schur.info() != Eigen::Success) throw DecompositionFailure("Schur reduction did not converge");
    const CMatrix& T = schur.matrixT();
    const CMatrix& U = schur.matrixU();
    std::vector<double> phase(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double t = wrap_angle(std::arg(T(i, i)));
        if (two_pi - t < cluster_tol) t = 0.0;
        phase[i] = t;
    }
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return phase[a] < phase[b]; });

    EigenData E;
    E.eigenphases.resize(n);
    E.eigenvectors.resize(n, n);
    E.residuals.resize(n);
    E.cluster.resize(n);
    Eigen::Index start = 0;
    int cid = 0;
    while (start < n) {
        Eigen::Index end = start + 1;
        while (end < n && phase[order[end]] - phase[order[end - 1]] <= cluster_tol) ++end;
        CMatrix V(n, end - start);
        for (Eigen::Index j = start; j < end; ++j) V.col(j - start) = U.col(order[j]);
        CMatrix W = end - start > 1 ? canonical_basis(V) : V;
        for (Eigen::Index j = start; j < end; ++j) {
            CVector v = W.col(j - start);
            normalize_phase(v);
            E.eigenvectors.col(j) = v;
            E.eigenphases(j) = phase[order[j]];
            E.cluster[j] = cid;
            const cplx lambda = std::polar(1.0, E.eigenphases(j));
            E.residuals(j) = (M * v - lambda * v).norm();
        }
        start = end;
        ++cid;
    }
    if (E.max_residual() > residual_tol)
        throw DecompositionFailure("eigenvector residual " + std::to_string(E.max_residual()) + " exceeds tolerance");
    return E;
}

// ---------------------------------------------------------------------------------------------
// Measures of states.

enum class Quantizer { weyl, anti_wick, op_plus };

inline Quantizer parse_quantizer(const std::string& s) {
    if (s == "weyl") return Quantizer::weyl;
    if (s == "anti_wick" || s == "anti-wick" || s == "aw") return Quantizer::anti_wick;
    if (s == "op_plus" || s == "op-plus" || s == "plus") return Quantizer::op_plus;
    throw ValidationError("unknown quantizer '" + s + "'");
}

inline std::string to_string(Quantizer q) {
    switch (q) {
        case Quantizer::weyl: return "weyl";
        case Quantizer::anti_wick: return "anti_wick";
        case Quantizer::op_plus: return "op_plus";
    }
    return "?";
}

inline bool is_positive(Quantizer q) { return q != Quantizer::weyl; }

// Fourier multiplier of a quantizer relative to Weyl.
inline Multiplier quantizer_multiplier(const QuantumTorus& qt, Quantizer q, const AdaptedFrame* frame) {
    switch (q) {
        case Quantizer::weyl: return nullptr;
        case Quantizer::anti_wick: {
            const int N = qt.N;
            return [N](const Lattice& r) { return cplx(anti_wick_multiplier(N, r)); };
        }
        case Quantizer::op_plus: {
            if (!frame) throw ValidationError("op_plus requires an adapted frame");
            auto mu = std::make_shared<MoyalMultiplier>(adapted_scaling_matrix(*frame, qt.hbar()), qt.hbar());
            return [mu](const Lattice& r) { return cplx((*mu)(r)); };
        }
    }
    return nullptr;
}

inline CMatrix quantize(const QuantumTorus& qt, const TrigObservable& a, Quantizer q, const AdaptedFrame* frame = nullptr,
                        bool allow_alias = false) {
    check_band(qt, a, allow_alias || q != Quantizer::weyl);
    return weyl_terms(qt, a.coeffs(), quantizer_multiplier(qt, q, frame));
}

// chi_psi(r) = <psi | U(r/N) | psi>.
inline cplx characteristic(const QuantumTorus& qt, const CVector& psi, const Lattice& r) {
    const MonomialOp X = translation_monomial(qt, r);
    cplx s = 0;
    for (std::int64_t k = 0; k < X.size(); ++k) s += std::conj(psi(k)) * X.phase[k] * psi(X.src[k]);
    return s;
}

// <psi | Op(a) | psi> = sum_r a_r m_r chi_psi(r).
inline cplx measure_of_state(const QuantumTorus& qt, const CVector& psi, Quantizer q, const TrigObservable& a,
                             const AdaptedFrame* frame = nullptr, bool allow_alias = false) {
    check_band(qt, a, allow_alias || q != Quantizer::weyl);
    Multiplier m = quantizer_multiplier(qt, q, frame);
    cplx s = 0;
    for (const auto& [r, c] : a.coeffs()) s += c * (m ? m(r) : cplx(1)) * characteristic(qt, psi, r);
    return s;
}

struct MeasureGrid {
    int d = 1;
    int N = 1;
    int resolution = 0;
    std::vector<double> density;  // row-major over (x_1..x_d, xi_1..xi_d); mean value 1 after normalization
    double total = 0;             // quadrature of the raw density before normalization

    double mass() const {
        double s = 0;
        for (double v : density) s += v;
        return s / static_cast<double>(density.size());
    }
};

// N^d |<psi | rho, kappa>|^2 on the midpoint grid, normalized to unit mass.
inline MeasureGrid husimi_grid(const QuantumTorus& qt, const CVector& psi, int resolution) {
    if (resolution < 1) throw ValidationError("husimi: resolution must be positive");
    MeasureGrid H;
    H.d = qt.d;
    H.N = qt.N;
    H.resolution = resolution;
    const std::int64_t npts = ipow(resolution, 2 * qt.d);
    H.density.resize(npts);
    const std::vector<double> grid = midpoint_grid(resolution);
    const double Nd = static_cast<double>(qt.dim());
    std::vector<double> rho(2 * qt.d);
    for (std::int64_t p = 0; p < npts; ++p) {
        std::int64_t rem = p;
        for (int ax = 2 * qt.d - 1; ax >= 0; --ax) {
            rho[ax] = grid[rem % resolution];
            rem /= resolution;
        }
        CVector v = coherent_state(qt, rho, 1e-14, false);
        H.density[p] = Nd * std::norm(v.dot(psi));
    }
    H.total = H.mass();
    if (H.total > 0)
        for (double& v : H.density) v /= H.total;
    return H;
}

inline std::vector<double> egorov_drift(const QuantumTorus& qt, const CVector& psi, const TrigObservable& a, const IntMatrix& A,
                                        Quantizer q, int t_max, const AdaptedFrame* frame = nullptr, bool allow_alias = false) {
    if (t_max < 0) throw ValidationError("egorov_drift: t_max must be nonnegative");
    const cplx base = measure_of_state(qt, psi, q, a, frame, allow_alias);
    std::vector<double> out;
    for (int t = 0; t <= t_max; ++t) {
        const TrigObservable at = a.compose(int_power(A, t));
        out.push_back(std::abs(measure_of_state(qt, psi, q, at, frame, allow_alias) - base));
    }
    return out;
}

}  // namespace catmap
