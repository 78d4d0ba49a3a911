#pragma once

// History-dependent dynamical systems: x(i) = f(x(i-1), ..., x(i-s)) for i > s,
// with the first s states given. Boundary functions cover the linear family
// (arbitrary F, the all-ones Sum used by the generalized Fibonacci series, and
// sign-composed binary tasks) plus single-head self-attention.

#include "wavemem/numerics.hpp"
#include "wavemem/rng.hpp"

#include <span>
#include <string>
#include <vector>

namespace wavemem {

/// SignedLinear boundaries refuse to evaluate sign(0); trajectory generation
/// catches this and resamples the inputs.
struct zero_preactivation : numerical_error {
    using numerical_error::numerical_error;
};

/// Key/query/value maps of a single attention head acting as a wave boundary.
struct SbcParams {
    Mat w_k;
    Mat w_q;
    Mat w_v;
    double temperature = 1.0;

    Index dim() const { return w_k.rows(); }

    void validate() const {
        const Index d = w_k.rows();
        if (d == 0 || w_k.cols() != d || w_q.rows() != d || w_q.cols() != d || w_v.rows() != d
            || w_v.cols() != d) {
            throw std::invalid_argument("SbcParams: W_K, W_Q, W_V must all be d x d");
        }
        require_finite(w_k, "SbcParams.w_k");
        require_finite(w_q, "SbcParams.w_q");
        require_finite(w_v, "SbcParams.w_v");
        if (!(temperature > 0.0)) throw std::invalid_argument("SbcParams: temperature must be positive");
    }
};

namespace detail {

/// Softmax attention of the newest column over the whole window.
/// window: d x s, column i = h_i (oldest first, query = last column).
inline Vec attention_step(const Mat& window, const SbcParams& p) {
    const Index s = window.cols();
    const Vec query = p.w_q * window.col(s - 1);
    Vec logits(s);
    for (Index i = 0; i < s; ++i) {
        logits(i) = (p.w_k.transpose() * window.col(i)).dot(query) / p.temperature;
    }
    logits.array() -= logits.maxCoeff(); // stabilized softmax
    Vec weights = logits.array().exp();
    weights /= weights.sum();

    Vec out = Vec::Zero(window.rows());
    for (Index i = 0; i < s; ++i) out += weights(i) * (p.w_v * window.col(i));
    return out;
}

} // namespace detail

/// The start-boundary function f of an HDS / wave substrate. Linear and
/// SignedLinear carry a d x (s*d) matrix acting on the stacked history
/// (oldest state first); Sum is the special case F = [I | I | ... | I].
struct BoundaryFn {
    enum class Kind { Linear, Sum, SignedLinear, SelfAttention };

    Kind kind = Kind::Sum;
    Mat f;          // d x (s*d) for Linear / SignedLinear
    SbcParams attn; // for SelfAttention

    static BoundaryFn linear(Mat f_matrix) {
        require_finite(f_matrix, "BoundaryFn.linear");
        BoundaryFn b;
        b.kind = Kind::Linear;
        b.f = std::move(f_matrix);
        return b;
    }

    static BoundaryFn sum() {
        BoundaryFn b;
        b.kind = Kind::Sum;
        return b;
    }

    static BoundaryFn signed_linear(Mat f_matrix) {
        require_finite(f_matrix, "BoundaryFn.signed_linear");
        BoundaryFn b;
        b.kind = Kind::SignedLinear;
        b.f = std::move(f_matrix);
        return b;
    }

    static BoundaryFn self_attention(SbcParams params) {
        params.validate();
        BoundaryFn b;
        b.kind = Kind::SelfAttention;
        b.attn = std::move(params);
        return b;
    }

    bool has_linear_matrix() const { return kind != Kind::SelfAttention; }

    /// Linear action on the stacked history: F itself for Linear/SignedLinear
    /// (the sign is applied after this map), [I|...|I] for Sum.
    Mat linear_matrix(Index s, Index d) const {
        switch (kind) {
        case Kind::Sum: {
            Mat f_sum(d, s * d);
            for (Index i = 0; i < s; ++i) f_sum.middleCols(i * d, d) = Mat::Identity(d, d);
            return f_sum;
        }
        case Kind::Linear:
        case Kind::SignedLinear:
            return f;
        case Kind::SelfAttention:
            throw std::invalid_argument("BoundaryFn: self-attention has no linear matrix");
        }
        throw std::logic_error("BoundaryFn: unknown kind");
    }

    void validate(Index s, Index d) const {
        switch (kind) {
        case Kind::Sum:
            return;
        case Kind::Linear:
        case Kind::SignedLinear:
            if (f.rows() != d || f.cols() != s * d) {
                throw std::invalid_argument("BoundaryFn: F must be d x (s*d)");
            }
            return;
        case Kind::SelfAttention:
            attn.validate();
            if (attn.dim() != d) throw std::invalid_argument("BoundaryFn: attention dimension mismatch");
            return;
        }
    }
};

enum class Domain { Real, Binary };

/// Task definition per the HDS evolution equations: state dimension d, history
/// length s, boundary f, state domain.
struct HdsSpec {
    Index d = 1;
    Index s = 1;
    BoundaryFn boundary;
    Domain domain = Domain::Real;

    void validate() const {
        if (d < 1 || s < 1) throw std::invalid_argument("HdsSpec: d and s must be >= 1");
        boundary.validate(s, d);
        if (domain == Domain::Binary) {
            // Binary tasks must stay closed over {-1,+1}^d: sign-composed maps
            // always are; a plain linear map only when each row just copies
            // (possibly negates) a single coordinate.
            if (boundary.kind == BoundaryFn::Kind::SignedLinear) return;
            if (boundary.kind == BoundaryFn::Kind::Linear) {
                for (Index r = 0; r < boundary.f.rows(); ++r) {
                    Index nonzero = 0;
                    bool unit = true;
                    for (Index c = 0; c < boundary.f.cols(); ++c) {
                        const double v = boundary.f(r, c);
                        if (v != 0.0) {
                            ++nonzero;
                            unit = unit && (v == 1.0 || v == -1.0);
                        }
                    }
                    if (nonzero != 1 || !unit) {
                        throw std::invalid_argument(
                            "HdsSpec: binary domain requires a sign-representable boundary");
                    }
                }
                return;
            }
            throw std::invalid_argument("HdsSpec: binary domain requires a (signed) linear boundary");
        }
    }
};

namespace detail {

inline Vec stack_history(std::span<const Vec> history, Index d) {
    Vec flat(static_cast<Index>(history.size()) * d);
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].size() != d) throw std::invalid_argument("history: state dimension mismatch");
        flat.segment(static_cast<Index>(i) * d, d) = history[i];
    }
    return flat;
}

inline Vec apply_boundary(const BoundaryFn& boundary, std::span<const Vec> history, Index s, Index d) {
    if (static_cast<Index>(history.size()) != s) {
        throw std::invalid_argument("apply_boundary: history must hold exactly s states");
    }
    switch (boundary.kind) {
    case BoundaryFn::Kind::Sum: {
        Vec out = Vec::Zero(d);
        for (const Vec& h : history) {
            if (h.size() != d) throw std::invalid_argument("history: state dimension mismatch");
            out += h;
        }
        return out;
    }
    case BoundaryFn::Kind::Linear:
        return boundary.f * stack_history(history, d);
    case BoundaryFn::Kind::SignedLinear: {
        const Vec pre = boundary.f * stack_history(history, d);
        Vec out(d);
        for (Index j = 0; j < d; ++j) {
            if (pre(j) == 0.0) {
                throw zero_preactivation("SignedLinear boundary: sign(0) is undefined");
            }
            out(j) = pre(j) > 0.0 ? 1.0 : -1.0;
        }
        return out;
    }
    case BoundaryFn::Kind::SelfAttention: {
        Mat window(d, s);
        for (Index i = 0; i < s; ++i) {
            if (history[static_cast<std::size_t>(i)].size() != d) {
                throw std::invalid_argument("history: state dimension mismatch");
            }
            window.col(i) = history[static_cast<std::size_t>(i)];
        }
        return attention_step(window, boundary.attn);
    }
    }
    throw std::logic_error("apply_boundary: unknown boundary kind");
}

} // namespace detail

/// One HDS step: f applied to the last s states, most recent last.
inline Vec hds_step(const HdsSpec& spec, std::span<const Vec> history) {
    spec.validate();
    return detail::apply_boundary(spec.boundary, history, spec.s, spec.d);
}

/// Input phase u(1..s) plus the exact targets x(s+1..horizon) generated by
/// iterating the boundary function.
struct Trajectory {
    std::vector<Vec> inputs;  // s vectors
    std::vector<Vec> targets; // horizon - s vectors
    Index horizon = 0;
};

/// Seeded trajectory sampling: binary tasks draw inputs uniformly from
/// {-1,+1}^d, real tasks from U(-1,1)^d. SignedLinear tasks that hit an exact
/// zero pre-activation are resampled (up to 100 attempts).
inline Trajectory generate_trajectory(const HdsSpec& spec, std::uint64_t seed, Index horizon) {
    spec.validate();
    if (horizon <= spec.s) throw std::invalid_argument("generate_trajectory: horizon must exceed s");

    Rng rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Trajectory traj;
        traj.horizon = horizon;
        traj.inputs.reserve(static_cast<std::size_t>(spec.s));
        for (Index i = 0; i < spec.s; ++i) {
            traj.inputs.push_back(spec.domain == Domain::Binary ? rng.sign_vec(spec.d)
                                                                : rng.uniform_vec(spec.d, -1.0, 1.0));
        }
        try {
            std::vector<Vec> window = traj.inputs;
            traj.targets.reserve(static_cast<std::size_t>(horizon - spec.s));
            for (Index t = spec.s; t < horizon; ++t) {
                Vec next = detail::apply_boundary(spec.boundary, window, spec.s, spec.d);
                traj.targets.push_back(next);
                window.erase(window.begin());
                window.push_back(std::move(next));
            }
            return traj;
        } catch (const zero_preactivation&) {
            continue; // resample the inputs
        }
    }
    throw numerical_error("generate_trajectory: 100 input resamples all hit sign(0)");
}

/// Generalized Fibonacci reference: F_n = u^n for n <= s, otherwise the sum of
/// the previous s terms. Returns F_1..F_n; used as the oracle for the wave
/// model equivalence tests.
inline std::vector<Vec> fibonacci_reference(std::span<const Vec> init, Index n) {
    if (init.empty()) throw std::invalid_argument("fibonacci_reference: empty initial history");
    const Index s = static_cast<Index>(init.size());
    const Index d = init[0].size();
    if (n < s) throw std::invalid_argument("fibonacci_reference: n must be >= s");

    std::vector<Vec> seq(init.begin(), init.end());
    for (const Vec& u : seq) {
        if (u.size() != d) throw std::invalid_argument("fibonacci_reference: dimension mismatch");
    }
    seq.reserve(static_cast<std::size_t>(n));
    while (static_cast<Index>(seq.size()) < n) {
        Vec next = Vec::Zero(d);
        for (Index k = 0; k < s; ++k) next += seq[seq.size() - 1 - static_cast<std::size_t>(k)];
        seq.push_back(std::move(next));
    }
    return seq;
}

} // namespace wavemem
