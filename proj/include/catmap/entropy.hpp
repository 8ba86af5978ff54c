#pragma once

#include "catmap/spectra.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <random>

namespace catmap {

// ---------------------------------------------------------------------------------------------
// Smooth partition of the torus with sum_i P_i^2 = 1.

// C-infinity step from 0 (t <= 0) to 1 (t >= 1), with step(1/2) = 1/2.
inline double smooth_step(double t) {
    if (t <= 0) return 0.0;
    if (t >= 1) return 1.0;
    const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

// Values of the k circle cells [j/k, (j+1)/k) at x, smoothed over windows of width delta0
// centred at each boundary. out has k entries and sum of squares 1.
inline void circle_partition(int k, double delta0, double x, double* out) {
    for (int j = 0; j < k; ++j) out[j] = 0.0;
    if (k == 1) {
        out[0] = 1.0;
        return;
    }
    x -= std::floor(x);
    int j = static_cast<int>(std::floor(x * k));
    if (j >= k) j = k - 1;
    const double dl = x - static_cast<double>(j) / k;
    const double dr = static_cast<double>(j + 1) / k - x;
    const double h = 0.5 * delta0;
    if (dl < h) {
        const double s = smooth_step((dl + h) / delta0);
        out[j] = std::sin(0.5 * pi * s);
        out[(j + k - 1) % k] = std::sin(0.5 * pi * (1.0 - s));
    } else if (dr < h) {
        const double s = smooth_step((h - dr) / delta0);
        out[j] = std::sin(0.5 * pi * (1.0 - s));
        out[(j + 1) % k] = std::sin(0.5 * pi * s);
    } else {
        out[j] = 1.0;
    }
}

struct SmoothPartition {
    int d = 1;
    int K = 2;
    double delta0 = 0.1;
    int G = 256;
    std::vector<int> axis_counts;  // cells per coordinate (x_1..x_d, xi_1..xi_d); product is K

    // All K member values at rho; member index is row-major over axis cells.
    void values(const double* rho, double* out) const {
        const int n = 2 * d;
        std::vector<double> buf;
        out[0] = 1.0;
        int filled = 1;
        for (int ax = 0; ax < n; ++ax) {
            const int k = axis_counts[ax];
            buf.assign(k, 0.0);
            circle_partition(k, delta0, rho[ax], buf.data());
            for (int i = filled - 1; i >= 0; --i)
                for (int c = k - 1; c >= 0; --c) out[i * k + c] = out[i] * buf[c];
            filled *= k;
        }
    }

    double member(int i, const std::vector<double>& rho) const {
        std::vector<double> v(K);
        values(rho.data(), v.data());
        return v[i];
    }

    std::int64_t grid_points() const { return ipow(G, 2 * d); }

    std::vector<double> grid_point(std::int64_t p) const {
        std::vector<double> rho(2 * d);
        for (int ax = 2 * d - 1; ax >= 0; --ax) {
            rho[ax] = (static_cast<double>(p % G) + 0.5) / G;
            p /= G;
        }
        return rho;
    }

    std::vector<double> samples(int i) const {
        std::vector<double> out(grid_points()), v(K);
        for (std::int64_t p = 0; p < grid_points(); ++p) {
            auto rho = grid_point(p);
            values(rho.data(), v.data());
            out[p] = v[i];
        }
        return out;
    }

    // Fourier coefficients of member i up to the given band, by grid quadrature.
    std::map<Lattice, cplx> fourier(int i, int band) const {
        const auto s = samples(i);
        std::map<Lattice, cplx> out;
        const int n = 2 * d;
        Lattice r(n, -band);
        while (true) {
            cplx c = 0;
            for (std::int64_t p = 0; p < grid_points(); ++p) {
                auto rho = grid_point(p);
                double ph = 0;
                for (int a = 0; a < d; ++a) ph += -static_cast<double>(r[d + a]) * rho[a] + static_cast<double>(r[a]) * rho[d + a];
                c += s[p] * std::polar(1.0, two_pi * ph);
            }
            out[r] = c / static_cast<double>(grid_points());
            int a = 0;
            while (a < n && ++r[a] > band) r[a++] = -band;
            if (a == n) break;
        }
        return out;
    }

    double max_partition_defect() const {
        double m = 0;
        std::vector<double> v(K);
        for (std::int64_t p = 0; p < grid_points(); ++p) {
            auto rho = grid_point(p);
            values(rho.data(), v.data());
            double s = 0;
            for (double x : v) s += x * x;
            m = std::max(m, std::abs(s - 1.0));
        }
        return m;
    }
};

// K cells along x_1 unless per-axis counts are given.
inline SmoothPartition build_partition(int K, double delta0, int G, int d = 1, std::vector<int> axis_counts = {}) {
    if (K < 2) throw ValidationError("partition needs K >= 2");
    if (!(delta0 > 0) || delta0 >= 0.5) throw ValidationError("delta0 must lie in (0, 1/2)");
    if (G < 1) throw ValidationError("grid resolution must be positive");
    if (axis_counts.empty()) {
        axis_counts.assign(2 * d, 1);
        axis_counts[0] = K;
    }
    if (static_cast<int>(axis_counts.size()) != 2 * d) throw DimensionError("axis counts must have 2d entries");
    int prod = 1;
    for (int c : axis_counts) {
        if (c < 1) throw ValidationError("axis counts must be positive");
        prod *= c;
    }
    if (prod != K) throw ValidationError("axis counts must multiply to K");
    for (int c : axis_counts) {
        if (c == 1) continue;
        if (delta0 > 1.0 / c) throw CoverageError("transition width exceeds the cell width 1/" + std::to_string(c));
        if (delta0 * G < 4) throw CoverageError("transition width is not resolved by the grid (delta0 * G < 4)");
    }
    SmoothPartition P{d, K, delta0, G, axis_counts};
    if (P.max_partition_defect() > 1e-10) throw InvalidPartitionError("sum of squares differs from 1");
    return P;
}

// ---------------------------------------------------------------------------------------------
// Cylinder functions P_alpha = prod_{j in [lo, hi)} P_{alpha_j} o A^{j + shift}, enumerated by a
// sparse depth-first search over grid points where the running product is nonzero.

struct CylinderWindow {
    int lo = 0;
    int hi = 0;
    int shift = 0;

    int length() const { return hi - lo; }
};

inline CylinderWindow refine_window(int m, int shift = 0) { return {-m, m, shift}; }

inline double spectral_norm(const IntMatrix& A) {
    Eigen::JacobiSVD<RMatrix> svd(A.cast<double>());
    return svd.singularValues()(0);
}

// Exact image of the midpoint grid under an integer matrix: point p has coordinates (2 i + 1) / 2G.
class GridOrbit {
public:
    GridOrbit(const IntMatrix& A, int d, int G) : A_(A), d_(d), G_(G) {}

    // Coordinates of A^k rho_p as numerators over 2G, reduced mod 2G.
    void image(std::int64_t p, int k, std::int64_t* out) {
        const IntMatrix& Ak = power(k);
        const int n = 2 * d_;
        std::int64_t num[16];
        for (int ax = n - 1; ax >= 0; --ax) {
            num[ax] = 2 * (p % G_) + 1;
            p /= G_;
        }
        const std::int64_t M = 2 * static_cast<std::int64_t>(G_);
        for (int i = 0; i < n; ++i) {
            std::int64_t s = 0;
            for (int j = 0; j < n; ++j) s = mod_floor(s + mod_floor(Ak(i, j), M) * num[j], M);
            out[i] = s;
        }
    }

    const IntMatrix& power(int k) {
        auto it = cache_.find(k);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(k, int_power(A_, k)).first->second;
    }

private:
    IntMatrix A_;
    int d_, G_;
    std::map<int, IntMatrix> cache_;
};

struct SupportEntry {
    std::uint32_t point;
    double value;  // P_alpha^2 at the point
};

using CylinderVisitor = std::function<void(const std::vector<int>& word, const std::vector<SupportEntry>& support)>;

inline void check_refinement_resolution(const SmoothPartition& P, const IntMatrix& A, const CylinderWindow& w) {
    const int reach = std::max({std::abs(w.lo + w.shift), std::abs(w.hi - 1 + w.shift), 0});
    const double need = 4.0 * std::pow(spectral_norm(A), reach) * P.K;
    if (w.length() > 0 && P.G < need)
        throw RefinementAliasingError("grid resolution " + std::to_string(P.G) + " below 4 ||A||^" + std::to_string(reach) +
                                      " K = " + std::to_string(need));
}

inline void for_each_cylinder(const SmoothPartition& P, const IntMatrix& A, const CylinderWindow& w, const CylinderVisitor& visit) {
    if (w.length() < 0) throw ValidationError("cylinder window must have hi >= lo");
    if (P.grid_points() > std::numeric_limits<std::uint32_t>::max()) throw BudgetExceededError("grid too large");
    check_refinement_resolution(P, A, w);
    const int n = 2 * P.d;
    GridOrbit orbit(A, P.d, P.G);
    std::vector<SupportEntry> root(P.grid_points());
    for (std::int64_t p = 0; p < P.grid_points(); ++p) root[p] = {static_cast<std::uint32_t>(p), 1.0};
    std::vector<int> word;
    const double inv2G = 1.0 / (2.0 * P.G);
    std::function<void(const std::vector<SupportEntry>&)> rec = [&](const std::vector<SupportEntry>& support) {
        const int level = static_cast<int>(word.size());
        if (level == w.length()) {
            visit(word, support);
            return;
        }
        const int k = w.lo + level + w.shift;
        std::vector<std::vector<SupportEntry>> children(P.K);
        std::int64_t num[16];
        double rho[16];
        std::vector<double> vals(P.K);
        for (const auto& e : support) {
            orbit.image(e.point, k, num);
            for (int i = 0; i < n; ++i) rho[i] = static_cast<double>(num[i]) * inv2G;
            P.values(rho, vals.data());
            for (int c = 0; c < P.K; ++c)
                if (vals[c] != 0.0) children[c].push_back({e.point, e.value * vals[c] * vals[c]});
        }
        for (int c = 0; c < P.K; ++c) {
            if (children[c].empty()) continue;
            word.push_back(c);
            rec(children[c]);
            word.pop_back();
        }
    };
    rec(root);
}

struct CylinderStats {
    std::int64_t count = 0;           // nonempty cylinders
    double max_leb = 0;               // sup_alpha Leb(P_alpha^2)
    double max_identity_defect = 0;   // max_rho |sum_alpha P_alpha^2 - 1|
};

inline CylinderStats refine_stats(const SmoothPartition& P, const IntMatrix& A, const CylinderWindow& w) {
    CylinderStats S;
    std::vector<double> total(P.grid_points(), 0.0);
    const double inv = 1.0 / static_cast<double>(P.grid_points());
    for_each_cylinder(P, A, w, [&](const std::vector<int>&, const std::vector<SupportEntry>& sup) {
        ++S.count;
        double leb = 0;
        for (const auto& e : sup) {
            leb += e.value;
            total[e.point] += e.value;
        }
        S.max_leb = std::max(S.max_leb, leb * inv);
    });
    for (double t : total) S.max_identity_defect = std::max(S.max_identity_defect, std::abs(t - 1.0));
    return S;
}

// ---------------------------------------------------------------------------------------------
// Quantum weights mu^N(P_alpha^2 o A^p) as grid quadratures against the band-limited state density
// W(rho) = sum_r m_r chi_psi(r) e^{2 pi i <J r, rho>}, where m_r is the quantizer multiplier.

inline int multiplier_band(const QuantumTorus& qt, Quantizer q, const AdaptedFrame* frame, double threshold = 1e-16) {
    switch (q) {
        case Quantizer::anti_wick: return static_cast<int>(std::ceil(std::sqrt(-2.0 * qt.N * std::log(threshold) / pi)));
        case Quantizer::op_plus: {
            if (!frame) throw ValidationError("op_plus requires an adapted frame");
            return MoyalMultiplier(adapted_scaling_matrix(*frame, qt.hbar()), qt.hbar()).cutoff_band(threshold);
        }
        case Quantizer::weyl: break;
    }
    throw ValidationError("quantum entropy requires a positive quantizer (anti_wick or op_plus)");
}

inline std::vector<double> state_density(const QuantumTorus& qt, const CVector& psi, Quantizer q, const AdaptedFrame* frame, int G) {
    const int R = multiplier_band(qt, q, frame);
    if (2 * R + 1 > G) throw AliasingError("entropy grid G = " + std::to_string(G) + " cannot resolve the state density band " + std::to_string(R));
    const int d = qt.d, n = 2 * d, L = 2 * R + 1;
    Multiplier mult = quantizer_multiplier(qt, q, frame);
    // Coefficient tensor with axes ordered (r_p1..r_pd, r_q1..r_qd) so that axis t pairs with grid axis t.
    std::vector<std::int64_t> dims(n, L);
    std::vector<cplx> data(static_cast<size_t>(ipow(L, n)));
    Lattice r(n);
    for (size_t idx = 0; idx < data.size(); ++idx) {
        size_t rem = idx;
        for (int t = n - 1; t >= 0; --t) {
            const std::int64_t v = static_cast<std::int64_t>(rem % L) - R;
            rem /= L;
            if (t < d) r[d + t] = v;  // r_p pairs with x
            else r[t - d] = v;        // r_q pairs with xi
        }
        data[idx] = mult(r) * characteristic(qt, psi, r);
    }
    // Transform axis by axis: x_t gets e^{-2 pi i r_p x}, xi_t gets e^{+2 pi i r_q xi}.
    const std::vector<double> grid = midpoint_grid(G);
    for (int t = 0; t < n; ++t) {
        const double sgn = t < d ? -1.0 : 1.0;
        CMatrix E(G, L);
        for (int g = 0; g < G; ++g)
            for (int c = 0; c < L; ++c) E(g, c) = std::polar(1.0, sgn * two_pi * grid[g] * static_cast<double>(c - R));
        std::int64_t outer = 1, inner = 1;
        for (int s = 0; s < t; ++s) outer *= dims[s];
        for (int s = t + 1; s < n; ++s) inner *= dims[s];
        std::vector<cplx> next(static_cast<size_t>(outer * G * inner));
        for (std::int64_t o = 0; o < outer; ++o) {
            Eigen::Map<const CMatrix, 0, Eigen::OuterStride<>> in(data.data() + o * L * inner, inner, L, Eigen::OuterStride<>(inner));
            Eigen::Map<CMatrix, 0, Eigen::OuterStride<>> out(next.data() + o * G * inner, inner, G, Eigen::OuterStride<>(inner));
            out = in * E.transpose();
        }
        data.swap(next);
        dims[t] = G;
    }
    std::vector<double> W(data.size());
    for (size_t i = 0; i < data.size(); ++i) W[i] = data[i].real();
    return W;
}

struct CylinderWeights {
    std::vector<std::vector<int>> words;
    std::vector<double> weights;
    std::vector<double> leb;
    double total = 0;
    double min_raw = 0;  // most negative weight before clipping
};

inline CylinderWeights cylinder_weights(const SmoothPartition& P, const IntMatrix& A, const CylinderWindow& w, const std::vector<double>& W,
                                        double clip_tol = 1e-9, std::int64_t budget = 1000000) {
    if (static_cast<std::int64_t>(W.size()) != P.grid_points()) throw DimensionError("state density and partition grids differ");
    if (std::pow(static_cast<double>(P.K), w.length()) > static_cast<double>(budget))
        throw BudgetExceededError("K^" + std::to_string(w.length()) + " cylinders exceed the enumeration budget");
    CylinderWeights C;
    const double inv = 1.0 / static_cast<double>(P.grid_points());
    for_each_cylinder(P, A, w, [&](const std::vector<int>& word, const std::vector<SupportEntry>& sup) {
        double s = 0, leb = 0;
        for (const auto& e : sup) {
            s += e.value * W[e.point];
            leb += e.value;
        }
        s *= inv;
        C.min_raw = std::min(C.min_raw, s);
        if (s < -clip_tol) throw QuantizerPositivityError("cylinder weight " + std::to_string(s) + " below -" + std::to_string(clip_tol));
        if (s < 0) s = 0;
        C.words.push_back(word);
        C.weights.push_back(s);
        C.leb.push_back(leb * inv);
        C.total += s;
    });
    return C;
}

inline double entropy_of(const std::vector<double>& weights) {
    double h = 0;
    for (double x : weights) h += eta(x);
    return h;
}

struct EntropyContext {
    QuantumTorus qt;
    IntMatrix A;
    SmoothPartition P;
    Quantizer quantizer = Quantizer::op_plus;
    std::optional<AdaptedFrame> frame;
    std::vector<double> W;

    EntropyContext(const QuantumTorus& qt_, const IntMatrix& A_, const SmoothPartition& P_, const CVector& psi, Quantizer q,
                   std::optional<AdaptedFrame> fr = std::nullopt)
        : qt(qt_), A(A_), P(P_), quantizer(q), frame(std::move(fr)) {
        if (std::abs(psi.norm() - 1.0) > 1e-10) throw ValidationError("state must have unit norm");
        W = state_density(qt, psi, q, frame ? &*frame : nullptr, P.G);
    }

    // h^p over the window [lo, hi): sum_alpha eta(mu^N(P_alpha^2 o A^p)).
    double entropy(const CylinderWindow& w) const {
        if (w.length() == 0) return 0.0;
        CylinderWeights C = cylinder_weights(P, A, w, W);
        if (std::abs(C.total - 1.0) > 1e-6) throw QuantizerPositivityError("cylinder weights sum to " + std::to_string(C.total));
        return entropy_of(C.weights);
    }

    // h^p_{2m}
    double translated(int m, int p) const { return entropy(refine_window(m, p)); }
};

inline double quantum_entropy(const QuantumTorus& qt, const CVector& psi, const SmoothPartition& P, const IntMatrix& A, int m, Quantizer q,
                              const AdaptedFrame* frame = nullptr, int p_shift = 0) {
    EntropyContext ctx(qt, A, P, psi, q, frame ? std::optional<AdaptedFrame>(*frame) : std::nullopt);
    return ctx.translated(m, p_shift);
}

// ---------------------------------------------------------------------------------------------
// Subadditivity: h^p_{2(n+m)} <= h^{n+p}_{2m} + h^{-m+p}_{2n} and the chained form.

struct SubadditivityTriple {
    int n = 0, m = 0, p = 0;
    double lhs = 0, rhs = 0;
    double margin() const { return rhs - lhs; }
};

struct SubadditivityReport {
    std::vector<SubadditivityTriple> triples;
    double worst_triple_margin = 0;
    int m = 0, m0 = 0, q = 0, r = 0;
    double chain_lhs = 0, chain_rhs = 0;   // h_{2m} and h^{-q m0}_{2r} + sum_j h^{-(q+1-2j)m0+r}_{2m0}
    double drift = 0;                      // max_p |h^p_{2m0} - h_{2m0}| and |h^{-q m0}_{2r} - h_{2r}|
    double lemma_rhs = 0;                  // h_{2r} + q h_{2m0} + (q+1) drift
    double h_m0 = 0, h_r = 0;
};

inline SubadditivityReport subadditivity_check(const EntropyContext& ctx, int m0, int m) {
    if (m0 < 1) throw ValidationError("m0 must be >= 1");
    if (m < m0) throw ValidationError("m must be >= m0");
    SubadditivityReport R;
    R.m = m;
    R.m0 = m0;
    R.q = m / m0;
    R.r = m % m0;
    std::map<std::pair<int, int>, double> memo;
    auto h = [&](int len, int p) {
        auto key = std::make_pair(len, p);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        return memo[key] = ctx.translated(len, p);
    };
    R.worst_triple_margin = std::numeric_limits<double>::infinity();
    for (int n = 0; n <= m; ++n)
        for (int mm = 0; n + mm <= m; ++mm)
            for (int p = -(m - n - mm); p <= m - n - mm; ++p) {
                if (n + mm == 0) continue;
                SubadditivityTriple T{n, mm, p, h(n + mm, p), h(mm, n + p) + h(n, -mm + p)};
                R.worst_triple_margin = std::min(R.worst_triple_margin, T.margin());
                R.triples.push_back(T);
            }
    R.chain_lhs = h(m, 0);
    R.chain_rhs = h(R.r, -R.q * m0);
    R.h_m0 = h(m0, 0);
    R.h_r = h(R.r, 0);
    R.drift = std::abs(h(R.r, -R.q * m0) - R.h_r);
    for (int j = 1; j <= R.q; ++j) {
        const int p = -(R.q + 1 - 2 * j) * m0 + R.r;
        const double v = h(m0, p);
        R.chain_rhs += v;
        R.drift = std::max(R.drift, std::abs(v - R.h_m0));
    }
    R.lemma_rhs = R.h_r + R.q * R.h_m0 + (R.q + 1) * R.drift;
    return R;
}

// ---------------------------------------------------------------------------------------------
// Entropic uncertainty principle.

struct EupResult {
    double lhs = 0, rhs = 0, margin = 0;
    double partition_defect = 0;  // ||sum pi^dag pi - Id|| before any renormalization
    bool renormalized = false;
};

inline EupResult eup_check(std::vector<CMatrix> pis, const CMatrix& U, const CVector& psi, double premise_tol = 1e-8) {
    if (pis.empty()) throw ValidationError("empty partition");
    const Eigen::Index n = U.rows();
    if (std::abs(psi.norm() - 1.0) > 1e-10) throw ValidationError("state must have unit norm");
    CMatrix S = CMatrix::Zero(n, n);
    for (const auto& p : pis) {
        if (p.cols() != n) throw DimensionError("partition member has the wrong number of columns");
        S += p.adjoint() * p;
    }
    EupResult E;
    E.partition_defect = hermitian_op_norm(S - CMatrix::Identity(n, n));
    if (E.partition_defect > premise_tol) {
        const CMatrix Sih = inverse_sqrt_psd(S);
        for (auto& p : pis) p = p * Sih;
        E.renormalized = true;
    }
    const CVector Upsi = U * psi;
    for (const auto& p : pis) E.lhs += eta((p * psi).squaredNorm()) + eta((p * Upsi).squaredNorm());
    double c = 0;
    for (const auto& pi_i : pis) {
        const CMatrix L = pi_i * U;
        for (const auto& pi_j : pis) c = std::max(c, op_norm(L * pi_j.adjoint()));
    }
    E.rhs = -2.0 * std::log(c);
    E.margin = E.lhs - E.rhs;
    return E;
}

// Partition given by effects E_i >= 0 with sum E_i = Id; pi_i = E_i^{1/2}.
inline EupResult eup_check_effects(const std::vector<CMatrix>& effects, const CMatrix& U, const CVector& psi) {
    std::vector<CMatrix> pis;
    for (const auto& e : effects) pis.push_back(sqrt_psd(e));
    return eup_check(pis, U, psi);
}

// Random inputs for the uncertainty suite.

inline CMatrix random_unitary(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    CMatrix Z(n, n);
    for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = cplx(g(rng), g(rng));
    Eigen::HouseholderQR<CMatrix> qr(Z);
    CMatrix Q = qr.householderQ();
    const CMatrix R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j) Q.col(j) *= R(j, j) / std::abs(R(j, j));  // Haar measure
    return Q;
}

inline CVector random_state(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    CVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = cplx(g(rng), g(rng));
    return v / v.norm();
}

// k orthogonal projectors onto consecutive groups of columns of a random unitary basis.
inline std::vector<CMatrix> random_projective_partition(Eigen::Index n, int k, std::mt19937_64& rng) {
    if (k < 1 || k > n) throw ValidationError("partition size must lie in [1, dim]");
    const CMatrix V = random_unitary(n, rng);
    std::vector<CMatrix> out;
    Eigen::Index start = 0;
    for (int i = 0; i < k; ++i) {
        const Eigen::Index len = n / k + (i < n % k ? 1 : 0);
        out.push_back(V.middleCols(start, len) * V.middleCols(start, len).adjoint());
        start += len;
    }
    return out;
}

// Effects with random positive weights: E_i = S^{-1/2} X_i S^{-1/2}, X_i = G_i G_i^dag.
inline std::vector<CMatrix> random_effects(Eigen::Index n, int k, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<CMatrix> X;
    CMatrix S = CMatrix::Zero(n, n);
    for (int i = 0; i < k; ++i) {
        CMatrix G(n, n);
        for (Eigen::Index j = 0; j < G.size(); ++j) G.data()[j] = cplx(g(rng), g(rng));
        X.push_back(G * G.adjoint());
        S += X.back();
    }
    const CMatrix Sih = inverse_sqrt_psd(S);
    for (auto& x : X) x = Sih * x * Sih;
    return X;
}

inline CMatrix dft_matrix(Eigen::Index n) {
    CMatrix F(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < n; ++k) F(j, k) = exp_i_pi_rational(-2 * j * k, n) / std::sqrt(static_cast<double>(n));
    return F;
}

// ---------------------------------------------------------------------------------------------
// Sampled estimate of c(A, n) and the Theorem 5.2 comparison.

struct CBoundSettings {
    double delta = 0.01;
    double epsilon = 0.1;
    int samples = 64;
    int refine_rounds = 0;
    std::uint64_t seed = 1;
};

struct CBoundResult {
    double c_hat = 0;
    double theorem_rhs = 0;   // |det B| hbar^{-delta - eps Lambda_+/lambda_max} e^{-n Lambda_0}, no constant
    double log_gap = 0;       // log c_hat + n Lambda_0 - log |det B|
    int n = 0;
    int samples = 0;
    std::vector<double> argmax;  // (rho, rho', rho0, rho0')
};

inline double uniform01(std::uint64_t& state) {
    state = splitmix64(state);
    return static_cast<double>(state >> 11) * 0x1.0p-53;
}

inline CBoundResult c_bound_estimate(const QuantumTorus& qt, const AdaptedFrame& frame, const IntMatrix& A, int n, const CBoundSettings& cfg,
                                     const CMatrix* M_in = nullptr) {
    if (cfg.samples < 64) throw ValidationError("c_bound needs at least 64 samples");
    if (n < 0) throw ValidationError("n must be nonnegative");
    const LyapunovData L = lyapunov_data(A);
    const int nE = ehrenfest_times(qt.N, cfg.epsilon, L).n_E;
    if (n > nE) throw ValidationError("n exceeds n_E = " + std::to_string(nE));
    const CMatrix M = M_in ? *M_in : propagator(A, qt);
    const CMatrix Mn = matrix_power(M, n);
    const RMatrix B = adapted_scaling_matrix(frame, qt.hbar());
    const int dd = 2 * qt.d;
    auto op = [&](const double* rho, const double* rho0) {
        RVector r(dd), r0(dd);
        for (int i = 0; i < dd; ++i) {
            r(i) = rho[i];
            r0(i) = rho0[i];
        }
        return periodized_gaussian_op(qt, r, r0, B);
    };
    auto value = [&](const std::vector<double>& x) {
        const CMatrix X = op(x.data(), x.data() + 2 * dd);
        const CMatrix Y = op(x.data() + dd, x.data() + 3 * dd);
        return op_norm(X * Mn * Y.adjoint());
    };
    CBoundResult R;
    R.n = n;
    R.samples = cfg.samples;
    R.c_hat = -1;
    for (int s = 0; s < cfg.samples; ++s) {
        std::uint64_t st = splitmix64(cfg.seed ^ (0x632be59bd9b4e019ULL * (static_cast<std::uint64_t>(s) + 1)));
        std::vector<double> x(4 * dd);
        for (auto& v : x) v = uniform01(st);
        const double c = value(x);
        if (c > R.c_hat) {
            R.c_hat = c;
            R.argmax = x;
        }
    }
    double radius = 0.5 / qt.N;
    for (int round = 0; round < cfg.refine_rounds; ++round) {
        std::uint64_t st = splitmix64(cfg.seed ^ (0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(round)));
        const std::vector<double> centre = R.argmax;
        for (int s = 0; s < 16; ++s) {
            std::vector<double> x = centre;
            for (auto& v : x) {
                v += radius * (2.0 * uniform01(st) - 1.0);
                v -= std::floor(v);
            }
            const double c = value(x);
            if (c > R.c_hat) {
                R.c_hat = c;
                R.argmax = x;
            }
        }
        radius *= 0.5;
    }
    const double hbar = qt.hbar();
    const double logdet = std::log(std::abs(B.determinant()));
    R.theorem_rhs = std::exp(logdet + (-cfg.delta - cfg.epsilon * L.Lambda_plus / L.lambda_max) * std::log(hbar) - n * L.Lambda_zero);
    R.log_gap = std::log(R.c_hat) + n * L.Lambda_zero - logdet;
    return R;
}

// ---------------------------------------------------------------------------------------------
// Finite-N entropy certificate on a discretized partition of identity.

struct CertificateSettings {
    int rho_grid = 2;    // per axis
    int rho0_grid = 12;  // per axis
    double tolerance = 1e-6;
};

struct CertificateResult {
    int m = 0, n = 0;
    std::int64_t family_size = 0;
    double frame_defect = 0;      // ||S - Id|| of the quadrature frame operator
    double h_disc = 0;            // entropy of psi for the renormalized family
    double h_disc_image = 0;      // entropy of M^n psi
    double sup_leb = 0;           // sup_alpha of the rho0-quadrature of P_alpha^2
    double c_disc = 0;            // max_{g,g'} ||Op_g S^{-1/2} M^n S^{-1/2} Op_g'^dag||
    double lower_bound = 0;       // -log sup_leb - log c_disc
    double margin = 0;            // (h_disc + h_disc_image)/2 - lower_bound
    double eup_lhs = 0, eup_rhs = 0;
    bool passed = false;
};

inline CertificateResult entropy_certificate(const QuantumTorus& qt, const CVector& psi, const SmoothPartition& P, const IntMatrix& A, int m,
                                             int n, const AdaptedFrame& frame, const CertificateSettings& cfg = {},
                                             const CMatrix* M_in = nullptr) {
    if (P.d != qt.d) throw DimensionError("partition and torus dimensions differ");
    if (std::abs(psi.norm() - 1.0) > 1e-10) throw ValidationError("state must have unit norm");
    const int dd = 2 * qt.d;
    const std::int64_t dim = qt.dim();
    const CMatrix M = M_in ? *M_in : propagator(A, qt);
    const CMatrix Mn = matrix_power(M, n);
    const RMatrix B = adapted_scaling_matrix(frame, qt.hbar());

    const std::int64_t nr = ipow(cfg.rho_grid, dd), n0 = ipow(cfg.rho0_grid, dd);
    const std::vector<double> grid_r = midpoint_grid(cfg.rho_grid), grid_0 = midpoint_grid(cfg.rho0_grid);
    auto point = [&](std::int64_t p, int G, const std::vector<double>& g) {
        RVector v(dd);
        for (int ax = dd - 1; ax >= 0; --ax) {
            v(ax) = g[p % G];
            p /= G;
        }
        return v;
    };
    std::vector<CMatrix> ops;
    ops.reserve(static_cast<size_t>(nr * n0));
    const double w = 1.0 / static_cast<double>(nr * n0);
    CMatrix S = CMatrix::Zero(dim, dim);
    for (std::int64_t l = 0; l < n0; ++l) {
        const RVector rho0 = point(l, cfg.rho0_grid, grid_0);
        for (std::int64_t k = 0; k < nr; ++k) {
            ops.push_back(periodized_gaussian_op(qt, point(k, cfg.rho_grid, grid_r), rho0, B));
            S.noalias() += w * ops.back().adjoint() * ops.back();
        }
    }
    CertificateResult R;
    R.m = m;
    R.n = n;
    R.frame_defect = hermitian_op_norm(S - CMatrix::Identity(dim, dim));
    const CMatrix Sih = inverse_sqrt_psd(S);

    // Cylinder values P_alpha(rho0_l)^2 on the rho0 grid.
    const CylinderWindow win = refine_window(m);
    std::vector<std::vector<double>> cyl;  // per alpha, per rho0 point
    {
        const IntMatrix Ainv = symplectic_inverse(A);
        std::vector<std::vector<double>> factor(win.length() * P.K, std::vector<double>(n0));
        std::vector<double> vals(P.K);
        for (std::int64_t l = 0; l < n0; ++l) {
            const RVector rho0 = point(l, cfg.rho0_grid, grid_0);
            for (int t = 0; t < win.length(); ++t) {
                const int k = win.lo + t;
                RVector x = int_power(k >= 0 ? A : Ainv, std::abs(k)).cast<double>() * rho0;
                for (int i = 0; i < dd; ++i) x(i) -= std::floor(x(i));
                P.values(x.data(), vals.data());
                for (int c = 0; c < P.K; ++c) factor[t * P.K + c][l] = vals[c] * vals[c];
            }
        }
        const std::int64_t count = ipow(P.K, win.length());
        if (count > 1000000) throw BudgetExceededError("too many cylinders for the certificate");
        for (std::int64_t a = 0; a < count; ++a) {
            std::vector<double> v(n0, 1.0);
            std::int64_t rem = a;
            for (int t = win.length() - 1; t >= 0; --t) {
                const int c = static_cast<int>(rem % P.K);
                rem /= P.K;
                for (std::int64_t l = 0; l < n0; ++l) v[l] *= factor[t * P.K + c][l];
            }
            cyl.push_back(std::move(v));
        }
    }
    R.family_size = static_cast<std::int64_t>(cyl.size());

    // Effects E_alpha = sum_g w P_alpha(rho0_g)^2 S^{-1/2} Op_g^dag Op_g S^{-1/2}; only expectations are needed.
    const CVector phi = Sih * psi, phi_img = Sih * (Mn * psi);
    std::vector<double> a0(static_cast<size_t>(n0), 0.0), a1(static_cast<size_t>(n0), 0.0);
    for (std::int64_t l = 0; l < n0; ++l)
        for (std::int64_t k = 0; k < nr; ++k) {
            const CMatrix& O = ops[l * nr + k];
            a0[l] += w * (O * phi).squaredNorm();
            a1[l] += w * (O * phi_img).squaredNorm();
        }
    double total0 = 0, total1 = 0;
    for (const auto& v : cyl) {
        double e0 = 0, e1 = 0, leb = 0;
        for (std::int64_t l = 0; l < n0; ++l) {
            e0 += v[l] * a0[l];
            e1 += v[l] * a1[l];
            leb += v[l] / static_cast<double>(n0);
        }
        R.h_disc += eta(e0);
        R.h_disc_image += eta(e1);
        total0 += e0;
        total1 += e1;
        R.sup_leb = std::max(R.sup_leb, leb);
    }
    if (std::abs(total0 - 1.0) > 1e-8 || std::abs(total1 - 1.0) > 1e-8)
        throw CertificateError("renormalized family does not resolve the identity");

    // Exact cross-term norms over the quadrature family.
    std::vector<CMatrix> left(ops.size()), right(ops.size());
    for (size_t g = 0; g < ops.size(); ++g) {
        left[g] = ops[g] * Sih;
        right[g] = Mn * Sih * ops[g].adjoint();
    }
    for (size_t g = 0; g < ops.size(); ++g)
        for (size_t h = 0; h < ops.size(); ++h) {
            const CMatrix X = left[g] * right[h];
            const CMatrix XX = X * X.adjoint();
            R.c_disc = std::max(R.c_disc, std::sqrt(std::max(0.0, hermitian_op_norm(XX))));
        }
    R.lower_bound = -std::log(R.sup_leb) - std::log(R.c_disc);
    R.eup_lhs = R.h_disc + R.h_disc_image;
    R.eup_rhs = 2.0 * R.lower_bound;
    R.margin = 0.5 * (R.eup_lhs - R.eup_rhs);
    R.passed = R.margin >= -cfg.tolerance;
    if (!R.passed) throw CertificateError("certificate margin " + std::to_string(R.margin) + " is negative");
    return R;
}

// ---------------------------------------------------------------------------------------------
// Classical entropy of a measure for the square-cell partition of side 1/K.

struct ClassicalMeasure {
    int d = 1;
    int resolution = 0;            // grid points per axis
    std::vector<double> density;   // mean-one density on the midpoint grid; empty means Lebesgue
    std::vector<std::pair<std::vector<double>, double>> atoms;  // point masses
    double grid_mass = 1.0;        // total mass carried by the grid part
};

struct ClassicalEntropyResult {
    std::vector<double> H;          // H_{2m} for m = 1..m_max
    std::vector<double> per_step;   // H_{2m} / 2m
    std::vector<double> increments; // (H_{2m} - H_{2m-2}) / 2 for m >= 2
    double extrapolated = 0;        // last increment (or last per-step value when m_max = 1)
};

inline ClassicalEntropyResult classical_entropy(const ClassicalMeasure& mu, int K, const IntMatrix& A, int m_max) {
    if (K < 1 || m_max < 1) throw ValidationError("classical_entropy needs K >= 1 and m_max >= 1");
    const int d = mu.d, n = 2 * d, G = mu.resolution;
    if (half_dim(A) != d) throw DimensionError("matrix and measure dimensions differ");
    if (mu.grid_mass > 0) {
        const double need = K * std::pow(spectral_norm(A), m_max);
        if (G < need) throw AliasingError("grid resolution " + std::to_string(G) + " below K ||A||^m = " + std::to_string(need));
        if (!mu.density.empty() && static_cast<std::int64_t>(mu.density.size()) != ipow(G, n))
            throw DimensionError("density does not match the grid resolution");
    }
    const double symbols = std::pow(static_cast<double>(K), n);
    if (2 * m_max * std::log2(symbols) > 126) throw BudgetExceededError("itinerary code does not fit in 128 bits");
    const std::int64_t S = ipow(K, n);
    const IntMatrix Ainv = symplectic_inverse(A);
    std::vector<IntMatrix> powers;
    for (int j = -m_max; j < m_max; ++j) powers.push_back(int_power(j >= 0 ? A : Ainv, std::abs(j)));

    ClassicalEntropyResult out;
    for (int m = 1; m <= m_max; ++m) {
        std::vector<std::pair<__int128, double>> codes;
        const std::int64_t M2 = 2 * static_cast<std::int64_t>(G);
        if (mu.grid_mass > 0) {
            const std::int64_t npts = ipow(G, n);
            codes.reserve(static_cast<size_t>(npts));
            std::int64_t num[16], img[16];
            for (std::int64_t p = 0; p < npts; ++p) {
                std::int64_t rem = p;
                for (int ax = n - 1; ax >= 0; --ax) {
                    num[ax] = 2 * (rem % G) + 1;
                    rem /= G;
                }
                __int128 code = 0;
                for (int j = -m; j < m; ++j) {
                    const IntMatrix& Aj = powers[j + m_max];
                    std::int64_t cell = 0;
                    for (int i = 0; i < n; ++i) {
                        std::int64_t s = 0;
                        for (int c = 0; c < n; ++c) s = mod_floor(s + mod_floor(Aj(i, c), M2) * num[c], M2);
                        img[i] = s;
                        cell = cell * K + (img[i] * K) / M2;
                    }
                    code = code * S + cell;
                }
                const double wgt = (mu.density.empty() ? 1.0 : mu.density[p]) * mu.grid_mass / static_cast<double>(npts);
                codes.emplace_back(code, wgt);
            }
        }
        for (const auto& [pt, mass] : mu.atoms) {
            __int128 code = 0;
            for (int j = -m; j < m; ++j) {
                RVector x = powers[j + m_max].cast<double>() * Eigen::Map<const RVector>(pt.data(), n);
                std::int64_t cell = 0;
                for (int i = 0; i < n; ++i) {
                    double v = x(i) - std::floor(x(i));
                    cell = cell * K + std::min<std::int64_t>(K - 1, static_cast<std::int64_t>(std::floor(v * K)));
                }
                code = code * S + cell;
            }
            codes.emplace_back(code, mass);
        }
        std::sort(codes.begin(), codes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        double H = 0, acc = 0;
        for (size_t i = 0; i < codes.size(); ++i) {
            acc += codes[i].second;
            if (i + 1 == codes.size() || codes[i + 1].first != codes[i].first) {
                H += eta(acc);
                acc = 0;
            }
        }
        out.H.push_back(H);
        out.per_step.push_back(H / (2.0 * m));
        if (m >= 2) out.increments.push_back(0.5 * (H - out.H[m - 2]));
    }
    out.extrapolated = out.increments.empty() ? out.per_step.back() : out.increments.back();
    return out;
}

}  // namespace catmap
