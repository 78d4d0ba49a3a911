#pragma once

// Linear boundary condition machinery. With a linear f the whole wave dynamics
// collapses to one matrix: Phi = sum_{mu<=(s-1)d} psi_mu psi^{mu+d} (the shift)
// plus boundary rows filled from f's matrix, expressed in any full-column-rank
// basis. Iterating h(t) = Phi h(t-1) on an encoded substrate reproduces
// twm_step, and the readout extracts the s-th subspace contents.

#include "wavemem/twm.hpp"

namespace wavemem {

/// Biorthogonal basis pair: columns psi_mu of `psi` (n x sd) and rows psi^mu of
/// `dual` (sd x n) with dual * psi = I. Subspace i occupies flat indices
/// (i-1)d+1 .. i*d (1-based), matching the substrate flatten convention.
struct WaveBasis {
    Mat psi;  // n x (s*d)
    Mat dual; // (s*d) x n
    Index n = 0;
    Index s = 0;
    Index d = 0;

    static WaveBasis standard(Index s, Index d, Index n = -1) {
        if (s < 1 || d < 1) throw std::invalid_argument("WaveBasis: s and d must be >= 1");
        if (n < 0) n = s * d;
        if (n < s * d) throw std::invalid_argument("WaveBasis: n must be >= s*d");
        WaveBasis basis;
        basis.n = n;
        basis.s = s;
        basis.d = d;
        basis.psi = Mat::Identity(n, s * d);
        basis.dual = Mat::Identity(s * d, n);
        return basis;
    }

    static WaveBasis from_psi(Mat psi, Index s, Index d) {
        require_finite(psi, "WaveBasis.psi");
        if (psi.cols() != s * d) throw std::invalid_argument("WaveBasis: psi must have s*d columns");
        if (psi.rows() < s * d) throw std::invalid_argument("WaveBasis: n must be >= s*d");
        WaveBasis basis;
        basis.n = psi.rows();
        basis.s = s;
        basis.d = d;
        basis.dual = pinv(psi);
        basis.psi = std::move(psi);
        basis.validate();
        return basis;
    }

    void validate() const {
        const Mat gram = dual * psi;
        const double err = max_abs(Mat(gram - Mat::Identity(s * d, s * d)));
        if (err > 1e-8) {
            throw numerical_error("WaveBasis: dual*psi deviates from identity by "
                                  + std::to_string(err) + " (rank-deficient basis?)");
        }
    }

    /// Hidden-space embedding of a substrate snapshot.
    Vec encode(const WaveSubstrate& sub) const {
        if (sub.s != s || sub.d != d) throw std::invalid_argument("encode: substrate shape mismatch");
        return psi * sub.flatten();
    }

    /// Substrate coordinates of a hidden state.
    Vec coordinates(const Vec& h) const {
        if (h.size() != n) throw std::invalid_argument("coordinates: dimension mismatch");
        return dual * h;
    }
};

/// The wave operator in a chosen basis, kept together with its standard-
/// coordinate form and the shift/boundary split for inspection.
struct PhiOperator {
    Mat matrix;        // n x n, always shift_part + boundary_part
    Mat shift_part;    // n x n
    Mat boundary_part; // n x n
    Mat coords;        // (s*d) x (s*d) standard-coordinate form
    WaveBasis basis;

    Index s() const { return basis.s; }
    Index d() const { return basis.d; }
};

/// Build Phi for a linear boundary (Linear, Sum, or the linear pre-activation
/// of SignedLinear). Self-attention has no matrix form and is rejected.
inline PhiOperator build_phi(const BoundaryFn& f, const WaveBasis& basis) {
    if (!f.has_linear_matrix()) {
        throw std::invalid_argument("build_phi: boundary is not linear");
    }
    basis.validate();
    const Index s = basis.s;
    const Index d = basis.d;
    f.validate(s, d);
    const Mat f_matrix = f.linear_matrix(s, d);

    Mat shift_coords = Mat::Zero(s * d, s * d);
    for (Index mu = 0; mu + d < s * d; ++mu) shift_coords(mu, mu + d) = 1.0;
    Mat boundary_coords = Mat::Zero(s * d, s * d);
    boundary_coords.bottomRows(d) = f_matrix;

    PhiOperator phi;
    phi.basis = basis;
    phi.coords = shift_coords + boundary_coords;
    phi.shift_part = basis.psi * shift_coords * basis.dual;
    phi.boundary_part = basis.psi * boundary_coords * basis.dual;
    phi.matrix = phi.shift_part + phi.boundary_part;
    return phi;
}

/// Repeat-copy operator: the boundary copies subspace 1 into subspace s, so
/// the subspace contents cycle with period s and the spectrum is exactly the
/// s-th roots of unity, each with multiplicity d.
inline PhiOperator build_phi_repeat_copy(Index s, Index d, const WaveBasis& basis) {
    Mat f = Mat::Zero(d, s * d);
    f.leftCols(d) = Mat::Identity(d, d);
    return build_phi(BoundaryFn::linear(std::move(f)), basis);
}

inline PhiOperator build_phi_repeat_copy(Index s, Index d) {
    return build_phi_repeat_copy(s, d, WaveBasis::standard(s, d));
}

/// Eq.-7 readout: the s-th subspace contents of h in the standard basis.
inline Vec readout(const WaveBasis& basis, const Vec& h) {
    if (h.size() != basis.n) throw std::invalid_argument("readout: dimension mismatch");
    return basis.dual.middleRows((basis.s - 1) * basis.d, basis.d) * h;
}

/// Seeded random basis with condition number exactly min(conditioning, 1)..conditioning:
/// psi = Q diag(sigma) V^T with orthonormal Q, orthogonal V and singular values
/// spread linearly over [1, conditioning]. conditioning = 1 gives orthonormal
/// columns.
inline WaveBasis random_basis(Index n, Index s, Index d, std::uint64_t seed,
                              double conditioning = 1.0) {
    if (n < s * d) throw std::invalid_argument("random_basis: n must be >= s*d");
    if (!(conditioning >= 1.0)) throw std::invalid_argument("random_basis: conditioning must be >= 1");

    Rng rng(seed);
    const Index m = s * d;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const Mat g = rng.gaussian_mat(n, m);
        Eigen::HouseholderQR<Mat> qr(g);
        const Mat q = qr.householderQ() * Mat::Identity(n, m);

        const Mat gv = rng.gaussian_mat(m, m);
        Eigen::HouseholderQR<Mat> qrv(gv);
        const Mat v = qrv.householderQ() * Mat::Identity(m, m);

        Vec sigma(m);
        for (Index i = 0; i < m; ++i) {
            sigma(i) = m == 1 ? 1.0
                              : 1.0 + (conditioning - 1.0) * static_cast<double>(i)
                                          / static_cast<double>(m - 1);
        }

        WaveBasis basis;
        basis.n = n;
        basis.s = s;
        basis.d = d;
        basis.psi = q * sigma.asDiagonal() * v.transpose();
        basis.dual = pinv(basis.psi);
        const double err = max_abs(Mat(basis.dual * basis.psi - Mat::Identity(m, m)));
        if (err <= 1e-8) return basis;
    }
    throw numerical_error("random_basis: could not reach the requested conditioning in 100 attempts");
}

} // namespace wavemem
