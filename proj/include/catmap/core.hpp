#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace catmap {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using IntVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

// Lattice index r in Z^{2d}; ordered lexicographically so it can key a std::map.
using Lattice = std::vector<std::int64_t>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

inline constexpr const char* library_version = "1.0.0";

// Error categories drive the CLI exit code: validation -> 2, invariant -> 3, budget -> 4.
enum class ErrorKind { validation, invariant, budget };

class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& what, ErrorKind kind)
        : std::runtime_error(name + ": " + what), name_(std::move(name)), kind_(kind) {}
    const std::string& name() const { return name_; }
    ErrorKind kind() const { return kind_; }

private:
    std::string name_;
    ErrorKind kind_;
};

#define CATMAP_DEFINE_ERROR(Type, kind_value)                                      \
    struct Type : Error {                                                           \
        explicit Type(const std::string& what) : Error(#Type, what, kind_value) {}  \
    };

CATMAP_DEFINE_ERROR(ValidationError, ErrorKind::validation)
CATMAP_DEFINE_ERROR(DimensionError, ErrorKind::validation)
CATMAP_DEFINE_ERROR(NotQuantizableError, ErrorKind::validation)
CATMAP_DEFINE_ERROR(AliasingError, ErrorKind::validation)
CATMAP_DEFINE_ERROR(RefinementAliasingError, ErrorKind::validation)
CATMAP_DEFINE_ERROR(CoverageError, ErrorKind::validation)
CATMAP_DEFINE_ERROR(UnsupportedFrameError, ErrorKind::validation)
CATMAP_DEFINE_ERROR(IllConditionedSpectrumError, ErrorKind::invariant)
CATMAP_DEFINE_ERROR(ConsistencyFailure, ErrorKind::invariant)
CATMAP_DEFINE_ERROR(ConstructionFailure, ErrorKind::invariant)
CATMAP_DEFINE_ERROR(DecompositionFailure, ErrorKind::invariant)
CATMAP_DEFINE_ERROR(DerivationError, ErrorKind::invariant)
CATMAP_DEFINE_ERROR(QuantizerPositivityError, ErrorKind::invariant)
CATMAP_DEFINE_ERROR(InvalidPartitionError, ErrorKind::invariant)
CATMAP_DEFINE_ERROR(CertificateError, ErrorKind::invariant)
CATMAP_DEFINE_ERROR(BudgetExceededError, ErrorKind::budget)

#undef CATMAP_DEFINE_ERROR

// eta(x) = -x log x with eta(0) = 0.
inline double eta(double x) {
    if (x <= 0.0) return 0.0;
    return -x * std::log(x);
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

inline std::int64_t mod_floor(std::int64_t a, std::int64_t b) { return a - b * floor_div(a, b); }

// Reduce an angle to [0, 2pi).
inline double wrap_angle(double x) {
    double y = std::fmod(x, two_pi);
    if (y < 0) y += two_pi;
    if (y >= two_pi) y -= two_pi;
    return y == 0.0 ? 0.0 : y;
}

// e^{i pi p / q} for integers, reduced exactly before the trig call.
inline cplx exp_i_pi_rational(std::int64_t p, std::int64_t q) {
    std::int64_t m = mod_floor(p, 2 * q);
    return std::polar(1.0, pi * static_cast<double>(m) / static_cast<double>(q));
}

inline std::int64_t ipow(std::int64_t base, int e) {
    std::int64_t r = 1;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

// Spectral norm. Hermitian inputs go through the self-adjoint solver.
inline double op_norm(const CMatrix& X) {
    if (X.size() == 0) return 0.0;
    Eigen::BDCSVD<CMatrix> svd(X);
    return svd.singularValues()(0);
}

inline double hermitian_op_norm(const CMatrix& H) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(H, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double min_eigenvalue_hermitian(const CMatrix& H) {
    CMatrix S = 0.5 * (H + H.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline double unitarity_defect(const CMatrix& U) {
    CMatrix D = U.adjoint() * U - CMatrix::Identity(U.cols(), U.cols());
    return hermitian_op_norm(D);
}

inline double hermiticity_defect(const CMatrix& H) { return op_norm(H - H.adjoint()); }

// Inverse square root of a positive definite Hermitian matrix.
inline CMatrix inverse_sqrt_psd(const CMatrix& S, double floor_eig = 1e-12) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (S + S.adjoint()));
    if (es.eigenvalues()(0) <= floor_eig)
        throw InvalidPartitionError("frame operator is singular (min eigenvalue " +
                                    std::to_string(es.eigenvalues()(0)) + ")");
    RVector s = es.eigenvalues().array().rsqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}

inline CMatrix sqrt_psd(const CMatrix& S) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (S + S.adjoint()));
    RVector s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}

// SplitMix64 finalizer, used to derive independent per-sample seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace catmap
