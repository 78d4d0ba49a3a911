#pragma once

// Dense linear-algebra contracts shared by the whole library: eigendecomposition
// of general real matrices, Moore-Penrose pseudo-inverse, principal components.
// All routines are pure, single-threaded and deterministic: identical inputs
// give bit-identical outputs, so reports can be compared byte-wise across runs.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavemem {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Index = Eigen::Index;

/// Numerical failure (non-convergence, divergence, degenerate data).
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool all_finite(const Mat& a) {
    return a.allFinite();
}

inline void require_finite(const Mat& a, const char* what) {
    if (!a.allFinite()) {
        throw std::invalid_argument(std::string(what) + ": non-finite entries");
    }
}

/// Largest absolute entry; 0 for empty matrices.
inline double max_abs(const Mat& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double max_abs(const CMat& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Complex argument in (-pi, pi], mapping -0 imaginary parts to +0 so that
/// real negative eigenvalues always land on +pi.
inline double complex_argument(std::complex<double> z) {
    return std::atan2(z.imag() + 0.0, z.real());
}

/// Full spectrum of a real square matrix. Eigenvalues are sorted by complex
/// argument ascending with ties broken by magnitude descending (then by
/// real/imaginary part so the order is a total one). Complex eigenvalues come
/// in conjugate pairs because inputs are real.
struct ComplexSpectrum {
    CVec eigenvalues;
    CMat eigenvectors; // column per eigenvalue; empty when not requested

    bool has_eigenvectors() const { return eigenvectors.size() != 0; }
    Index size() const { return eigenvalues.size(); }
};

namespace detail {

inline std::vector<Index> spectrum_order(const CVec& values) {
    std::vector<Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double arg_a = complex_argument(values(a));
        const double arg_b = complex_argument(values(b));
        if (arg_a != arg_b) return arg_a < arg_b;
        const double mag_a = std::abs(values(a));
        const double mag_b = std::abs(values(b));
        if (mag_a != mag_b) return mag_a > mag_b;
        if (values(a).real() != values(b).real()) return values(a).real() < values(b).real();
        return values(a).imag() < values(b).imag();
    });
    return order;
}

} // namespace detail

/// Eigendecomposition of a general real square matrix via Schur reduction
/// (Hessenberg + shifted QR). Throws numerical_error if the QR iteration does
/// not converge or the eigenpair residuals exceed 1e-8 * max|A|.
inline ComplexSpectrum eig(const Mat& a, bool compute_vectors = true) {
    if (a.rows() != a.cols()) {
        throw std::invalid_argument("eig: matrix must be square");
    }
    require_finite(a, "eig");
    if (a.rows() == 0) return {};

    Eigen::EigenSolver<Mat> solver(a, compute_vectors);
    if (solver.info() != Eigen::Success) {
        throw numerical_error("eig: QR iteration hit its cap before converging ("
                              + std::to_string(a.rows()) + "x" + std::to_string(a.cols())
                              + " input is likely ill-conditioned)");
    }

    const auto order = detail::spectrum_order(solver.eigenvalues());
    ComplexSpectrum spectrum;
    spectrum.eigenvalues.resize(a.rows());
    if (compute_vectors) spectrum.eigenvectors.resize(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        spectrum.eigenvalues(i) = solver.eigenvalues()(order[static_cast<std::size_t>(i)]);
        if (compute_vectors) {
            spectrum.eigenvectors.col(i) = solver.eigenvectors().col(order[static_cast<std::size_t>(i)]);
        }
    }

    if (compute_vectors) {
        const double bound = 1e-8 * max_abs(a) + 1e-300;
        const CMat ac = a.cast<std::complex<double>>();
        for (Index i = 0; i < spectrum.size(); ++i) {
            const CVec residual =
                ac * spectrum.eigenvectors.col(i) - spectrum.eigenvalues(i) * spectrum.eigenvectors.col(i);
            if (residual.cwiseAbs().maxCoeff() > bound) {
                throw numerical_error("eig: eigenpair residual above tolerance, input is ill-conditioned");
            }
        }
    }
    return spectrum;
}

/// Spectral radius (values-only eigendecomposition).
inline double max_abs_eigenvalue(const Mat& a) {
    const ComplexSpectrum s = eig(a, /*compute_vectors=*/false);
    double r = 0.0;
    for (Index i = 0; i < s.size(); ++i) r = std::max(r, std::abs(s.eigenvalues(i)));
    return r;
}

namespace detail {

/// Singular-value cutoff used for rank decisions: sigma_max * max(rows, cols) * eps * 64.
inline double singular_cutoff(const Vec& singular_values, Index rows, Index cols) {
    if (singular_values.size() == 0) return 0.0;
    return singular_values(0) * static_cast<double>(std::max(rows, cols))
           * std::numeric_limits<double>::epsilon() * 64.0;
}

} // namespace detail

/// Moore-Penrose pseudo-inverse via SVD with the cutoff above. Satisfies the
/// four Penrose conditions to 1e-8 relative to |A|.
inline Mat pinv(const Mat& a) {
    require_finite(a, "pinv");
    if (a.size() == 0) return Mat::Zero(a.cols(), a.rows());

    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& sv = svd.singularValues();
    const double cutoff = detail::singular_cutoff(sv, a.rows(), a.cols());
    Vec inv = Vec::Zero(sv.size());
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Principal components of a sample matrix (rows = observations, columns =
/// dimensions). Components are orthonormal columns sorted by explained
/// variance descending; the largest-magnitude entry of each component is made
/// positive so the output is reproducible. When k exceeds the numerical rank
/// the achievable count is returned with `truncated` set.
struct PcaResult {
    Mat components;         // dims x count, column per component
    Vec explained_variance; // length count, descending
    bool truncated = false;

    Index count() const { return components.cols(); }
};

inline PcaResult principal_components(const Mat& samples, Index k) {
    require_finite(samples, "principal_components");
    if (k < 0) throw std::invalid_argument("principal_components: k must be >= 0");
    if (samples.rows() < k) {
        throw std::invalid_argument("principal_components: fewer observations than requested components");
    }

    PcaResult result;
    result.components = Mat::Zero(samples.cols(), 0);
    result.explained_variance = Vec::Zero(0);
    if (k == 0) return result;
    if (samples.rows() < 2) {
        result.truncated = true;
        return result;
    }

    const Mat centered = samples.rowwise() - samples.colwise().mean();
    Eigen::JacobiSVD<Mat> svd(centered, Eigen::ComputeThinV);
    const Vec& sv = svd.singularValues();
    const double cutoff = detail::singular_cutoff(sv, centered.rows(), centered.cols());

    Index rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff) ++rank;
    const Index count = std::min(rank, k);
    result.truncated = count < k;

    result.components = svd.matrixV().leftCols(count);
    result.explained_variance.resize(count);
    const double denom = static_cast<double>(samples.rows() - 1);
    for (Index i = 0; i < count; ++i) {
        result.explained_variance(i) = sv(i) * sv(i) / denom;
        // Deterministic sign: largest-magnitude entry positive, first index on ties.
        Index pivot = 0;
        result.components.col(i).cwiseAbs().maxCoeff(&pivot);
        if (result.components(pivot, i) < 0.0) result.components.col(i) = -result.components.col(i);
    }
    return result;
}

} // namespace wavemem
