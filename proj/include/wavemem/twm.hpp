#pragma once

// The traveling-wave working memory: an s x d lattice of activities where each
// of the d channels carries an independent 1-D wave. Waves travel from column
// s toward column 1; the open end at column 1 lets activity flow out, and each
// step writes f(previous substrate) into column s. Iterating the step and
// reading column s reproduces the underlying HDS exactly.

#include "wavemem/hds.hpp"

#include <vector>

namespace wavemem {

/// Immutable lattice snapshot. Storage is an s x d matrix: row i (0-based)
/// holds wave column i+1, entry (i, j) is h_{i+1, j+1}. The flat vector form
/// uses flat[(i-1)*d + j] = h_{i,j} in 1-based lattice coordinates.
struct WaveSubstrate {
    Index s = 0;
    Index d = 0;
    Mat h; // s x d

    static WaveSubstrate zero(Index s, Index d) {
        if (s < 1 || d < 1) throw std::invalid_argument("WaveSubstrate: s and d must be >= 1");
        return WaveSubstrate{s, d, Mat::Zero(s, d)};
    }

    static WaveSubstrate from_activities(Mat values) {
        require_finite(values, "WaveSubstrate");
        if (values.rows() < 1 || values.cols() < 1) {
            throw std::invalid_argument("WaveSubstrate: s and d must be >= 1");
        }
        WaveSubstrate sub;
        sub.s = values.rows();
        sub.d = values.cols();
        sub.h = std::move(values);
        return sub;
    }

    /// Wave column i, 0-based (column 0 = open end, column s-1 = start boundary).
    Vec column(Index i) const { return h.row(i).transpose(); }

    std::vector<Vec> columns() const {
        std::vector<Vec> cols;
        cols.reserve(static_cast<std::size_t>(s));
        for (Index i = 0; i < s; ++i) cols.push_back(column(i));
        return cols;
    }

    Vec flatten() const {
        Vec flat(s * d);
        for (Index i = 0; i < s; ++i) flat.segment(i * d, d) = h.row(i).transpose();
        return flat;
    }

    static WaveSubstrate unflatten(const Vec& flat, Index s, Index d) {
        if (flat.size() != s * d) throw std::invalid_argument("unflatten: size must be s*d");
        Mat values(s, d);
        for (Index i = 0; i < s; ++i) values.row(i) = flat.segment(i * d, d).transpose();
        return from_activities(std::move(values));
    }

    double total_activity() const { return h.cwiseAbs().sum(); }
};

/// One discrete time step: columns 1..s-1 take over their successor's previous
/// value and column s receives f applied to the whole previous substrate.
inline WaveSubstrate twm_step(const WaveSubstrate& sub, const BoundaryFn& boundary) {
    boundary.validate(sub.s, sub.d);
    const Vec incoming = detail::apply_boundary(boundary, sub.columns(), sub.s, sub.d);

    WaveSubstrate next = sub;
    for (Index i = 0; i + 1 < sub.s; ++i) next.h.row(i) = sub.h.row(i + 1);
    next.h.row(sub.s - 1) = incoming.transpose();
    return next;
}

struct TwmSystem {
    WaveSubstrate substrate;
    BoundaryFn boundary;

    TwmSystem& step() {
        substrate = twm_step(substrate, boundary);
        return *this;
    }

    /// The HDS output lives in column s.
    Vec read() const { return substrate.column(substrate.s - 1); }
};

/// Theorem-1 construction: initialize h_{i,j} = (u^i)_j and reuse the HDS
/// boundary unchanged; column-s readouts then reproduce the HDS exactly.
inline TwmSystem twm_from_hds(const HdsSpec& spec, std::span<const Vec> init) {
    spec.validate();
    if (static_cast<Index>(init.size()) != spec.s) {
        throw std::invalid_argument("twm_from_hds: init must hold exactly s states");
    }
    Mat values(spec.s, spec.d);
    for (Index i = 0; i < spec.s; ++i) {
        if (init[static_cast<std::size_t>(i)].size() != spec.d) {
            throw std::invalid_argument("twm_from_hds: dimension mismatch in init");
        }
        values.row(i) = init[static_cast<std::size_t>(i)].transpose();
    }
    return TwmSystem{WaveSubstrate::from_activities(std::move(values)), spec.boundary};
}

/// Self-attention boundary value for the current substrate (Eq. 8 with the
/// softmax running over the s stored columns).
inline Vec sbc_boundary(const WaveSubstrate& sub, const SbcParams& p) {
    p.validate();
    if (p.dim() != sub.d) throw std::invalid_argument("sbc_boundary: dimension mismatch");
    Mat window(sub.d, sub.s);
    for (Index i = 0; i < sub.s; ++i) window.col(i) = sub.column(i);
    return detail::attention_step(window, p);
}

/// Autoregressive SBC rollout: repeated twm_step with the attention boundary,
/// returning the column-s value after each step. Equivalent to a single
/// attention head decoding over a sliding window of the last s tokens.
inline std::vector<Vec> sbc_autoregress(WaveSubstrate sub, const SbcParams& p, Index steps) {
    if (steps < 1) throw std::invalid_argument("sbc_autoregress: steps must be >= 1");
    const BoundaryFn boundary = BoundaryFn::self_attention(p);
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (Index t = 0; t < steps; ++t) {
        sub = twm_step(sub, boundary);
        out.push_back(sub.column(sub.s - 1));
    }
    return out;
}

} // namespace wavemem
