#pragma once

// Everything that checks the theory against trained models: spectral
// comparison of the learned W_hh with the theoretical wave operator, recovery
// of the wave basis from trained weights, fixed-point finding + linearization,
// hidden-state projection into substrate coordinates, weight transformation
// into the recovered basis, and gradient-propagation measurements during
// training.

#include "wavemem/lbc.hpp"
#include "wavemem/rnn.hpp"

namespace wavemem {

struct AngularCluster {
    double angle = 0.0;
    int theoretical_count = 0;
    int empirical_count = 0;
};

/// Table-1 style comparison. Eigenvalues with |lambda| >= cutoff - band count
/// as persistent; the report is indeterminate when the two persistent sets
/// have different sizes. Pairing is greedy nearest-complex-argument matching
/// (circle distance), processing theoretical eigenvalues in sorted order.
struct SpectralReport {
    CVec theoretical; // full spectrum of the operator's coordinate form
    CVec empirical;   // full spectrum of W_hh
    std::vector<Index> theoretical_kept;
    std::vector<Index> empirical_kept;
    std::vector<std::pair<Index, Index>> pairing; // indices into the full spectra
    double mae_argument = 0.0;
    bool indeterminate = false;
    std::vector<AngularCluster> clusters;
    double magnitude_cutoff = 1.0;
    double band = 0.05;
};

namespace detail {

inline double circle_distance(double a, double b) {
    const double diff = std::fabs(a - b);
    return std::min(diff, 2.0 * M_PI - diff);
}

} // namespace detail

inline SpectralReport spectral_compare(const PhiOperator& phi, const Mat& w_hh,
                                       double magnitude_cutoff = 1.0, double band = 0.05) {
    if (w_hh.rows() != w_hh.cols()) throw std::invalid_argument("spectral_compare: W_hh must be square");
    require_finite(w_hh, "spectral_compare");

    SpectralReport report;
    report.magnitude_cutoff = magnitude_cutoff;
    report.band = band;
    report.theoretical = eig(phi.coords, /*compute_vectors=*/false).eigenvalues;
    report.empirical = eig(w_hh, /*compute_vectors=*/false).eigenvalues;

    const double threshold = magnitude_cutoff - band;
    for (Index i = 0; i < report.theoretical.size(); ++i) {
        if (std::abs(report.theoretical(i)) >= threshold) report.theoretical_kept.push_back(i);
    }
    for (Index i = 0; i < report.empirical.size(); ++i) {
        if (std::abs(report.empirical(i)) >= threshold) report.empirical_kept.push_back(i);
    }

    // Angular clusters seeded from the theoretical persistent set.
    for (Index idx : report.theoretical_kept) {
        const double angle = complex_argument(report.theoretical(idx));
        bool merged = false;
        for (AngularCluster& c : report.clusters) {
            if (detail::circle_distance(c.angle, angle) <= 1e-6) {
                ++c.theoretical_count;
                merged = true;
                break;
            }
        }
        if (!merged) report.clusters.push_back({angle, 1, 0});
    }
    for (Index idx : report.empirical_kept) {
        const double angle = complex_argument(report.empirical(idx));
        double best = std::numeric_limits<double>::infinity();
        AngularCluster* home = nullptr;
        for (AngularCluster& c : report.clusters) {
            const double dist = detail::circle_distance(c.angle, angle);
            if (dist < best) {
                best = dist;
                home = &c;
            }
        }
        if (home) ++home->empirical_count;
    }

    report.indeterminate = report.theoretical_kept.size() != report.empirical_kept.size();
    if (report.indeterminate) {
        report.mae_argument = std::numeric_limits<double>::quiet_NaN();
        return report;
    }

    std::vector<bool> used(report.empirical_kept.size(), false);
    double total = 0.0;
    for (Index t_idx : report.theoretical_kept) {
        const double t_angle = complex_argument(report.theoretical(t_idx));
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < report.empirical_kept.size(); ++j) {
            if (used[j]) continue;
            const double dist =
                detail::circle_distance(t_angle, complex_argument(report.empirical(report.empirical_kept[j])));
            if (dist < best) {
                best = dist;
                best_j = j;
            }
        }
        if (!report.empirical_kept.empty()) {
            used[best_j] = true;
            report.pairing.emplace_back(t_idx, report.empirical_kept[best_j]);
            total += best;
        }
    }
    report.mae_argument =
        report.pairing.empty() ? 0.0 : total / static_cast<double>(report.pairing.size());
    return report;
}

/// Wave basis approximated from trained weights (power iteration on W_hh^T
/// applied to pinv(W_r), with components along transient eigendirections
/// removed). `alpha` appears in the original listing but is never used by its
/// body; it is accepted and ignored for fidelity.
struct BlockDiagnostics {
    double conditioning = 0.0;
    Index rank = 0;
    bool rank_collapsed = false;
};

struct BasisRecovery {
    Mat psi;      // n x (s*d), block k in columns (k-1)d .. kd-1
    Mat psi_perp; // n x k_perp, principal components of the off-basis activity
    Index s = 0;
    Index d = 0;
    double transient_cutoff = 0.0;
    std::vector<BlockDiagnostics> blocks;
    double max_cross_coherence = 0.0;      // largest principal-angle cosine between blocks
    double reconstruction_residual = 0.0;  // relative off-basis activity of the samples
    bool polluted = false;                 // boundary action leaked into the recovered blocks

    Mat projector() const { return psi * pinv(psi); }
};

namespace detail {

/// Real invariant subspaces of eigenvalues below the cutoff: one column for a
/// real eigenvalue, [Re v, Im v] for a conjugate pair (handled once).
inline std::vector<Mat> transient_directions(const ComplexSpectrum& spectrum, double cutoff) {
    std::vector<Mat> dirs;
    for (Index i = 0; i < spectrum.size(); ++i) {
        const std::complex<double> lambda = spectrum.eigenvalues(i);
        if (std::abs(lambda) >= cutoff) continue;
        if (lambda.imag() < 0.0) continue; // conjugate partner already covered
        const CVec v = spectrum.eigenvectors.col(i);
        if (lambda.imag() == 0.0) {
            Mat e(v.size(), 1);
            e.col(0) = v.real();
            if (e.col(0).norm() == 0.0) e.col(0) = v.imag();
            dirs.push_back(std::move(e));
        } else {
            Mat e(v.size(), 2);
            e.col(0) = v.real();
            e.col(1) = v.imag();
            dirs.push_back(std::move(e));
        }
    }
    return dirs;
}

inline Mat orthonormal_columns(const Mat& block) {
    Eigen::JacobiSVD<Mat> svd(block, Eigen::ComputeThinU);
    const Vec& sv = svd.singularValues();
    const double cutoff = singular_cutoff(sv, block.rows(), block.cols());
    Index rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff) ++rank;
    return svd.matrixU().leftCols(rank);
}

} // namespace detail

inline BasisRecovery approximate_basis(const ElmanRnn& model, Index s, Index d,
                                       double transient_cutoff, const Mat& sample_states,
                                       double alpha = 0.0) {
    (void)alpha;
    model.validate();
    if (s < 1 || d < 1) throw std::invalid_argument("approximate_basis: bad dimensions");
    if (model.output_dim() != d) throw std::invalid_argument("approximate_basis: W_r rows != d");
    if (sample_states.size() != 0 && sample_states.cols() != model.hidden()) {
        throw std::invalid_argument("approximate_basis: sample columns must match hidden size");
    }

    const Index n = model.hidden();
    BasisRecovery rec;
    rec.s = s;
    rec.d = d;
    rec.transient_cutoff = transient_cutoff;
    rec.psi = Mat::Zero(n, s * d);

    const Mat readout_basis = pinv(model.w_r);
    rec.psi.middleCols((s - 1) * d, d) = readout_basis;

    std::vector<Mat> transients;
    if (s > 1) {
        const ComplexSpectrum spectrum = eig(model.w_hh, /*compute_vectors=*/true);
        transients = detail::transient_directions(spectrum, transient_cutoff);
    }
    Mat powered = readout_basis;
    for (Index k = 1; k <= s - 1; ++k) {
        powered = model.w_hh.transpose() * powered;
        Mat block = powered;
        for (const Mat& e : transients) block -= e * (pinv(e) * block);
        rec.psi.middleCols((k - 1) * d, d) = block;
    }

    // Per-block diagnostics plus cross-block principal-angle coherence: the
    // failure mode where the boundary keeps mutating the memories during the
    // input phase shows up as strongly overlapping block subspaces.
    std::vector<Mat> ortho;
    ortho.reserve(static_cast<std::size_t>(s));
    for (Index k = 0; k < s; ++k) {
        const Mat block = rec.psi.middleCols(k * d, d);
        Eigen::JacobiSVD<Mat> svd(block);
        const Vec& sv = svd.singularValues();
        BlockDiagnostics diag;
        const double cutoff = detail::singular_cutoff(sv, block.rows(), block.cols());
        while (diag.rank < sv.size() && sv(diag.rank) > cutoff) ++diag.rank;
        diag.rank_collapsed = diag.rank < d;
        diag.conditioning = (diag.rank == 0 || sv(diag.rank - 1) == 0.0)
                                ? std::numeric_limits<double>::infinity()
                                : sv(0) / sv(diag.rank - 1);
        rec.blocks.push_back(diag);
        ortho.push_back(detail::orthonormal_columns(block));
    }
    for (Index a = 0; a < s; ++a) {
        for (Index b2 = a + 1; b2 < s; ++b2) {
            if (ortho[static_cast<std::size_t>(a)].cols() == 0
                || ortho[static_cast<std::size_t>(b2)].cols() == 0) {
                continue;
            }
            const Mat overlap =
                ortho[static_cast<std::size_t>(a)].transpose() * ortho[static_cast<std::size_t>(b2)];
            Eigen::JacobiSVD<Mat> svd(overlap);
            if (svd.singularValues().size() > 0) {
                rec.max_cross_coherence = std::max(rec.max_cross_coherence, svd.singularValues()(0));
            }
        }
    }
    rec.polluted = rec.max_cross_coherence > 0.5;

    if (sample_states.rows() > 0) {
        const Mat projector = rec.projector();
        const Mat residual = sample_states - sample_states * projector.transpose();
        const double denom = sample_states.norm();
        rec.reconstruction_residual = denom > 0.0 ? residual.norm() / denom : 0.0;

        PcaResult pca = principal_components(residual, std::min<Index>(n, sample_states.rows() - 1));
        Index keep = 0;
        const double floor_variance =
            pca.explained_variance.size() > 0
                ? std::max(1e-12, 1e-8 * sample_states.squaredNorm()
                                      / static_cast<double>(sample_states.rows()))
                : 0.0;
        while (keep < pca.explained_variance.size() && pca.explained_variance(keep) > floor_variance) {
            ++keep;
        }
        rec.psi_perp = pca.components.leftCols(keep);
    } else {
        rec.psi_perp = Mat::Zero(n, 0);
    }
    return rec;
}

/// Hidden states gathered from fresh seeded simulations, one row per observed
/// state h(t), t = 1..horizon.
inline Mat collect_hidden_states(const ElmanRnn& model, const HdsSpec& task, Index n_traj,
                                 Index horizon, std::uint64_t seed) {
    model.validate();
    Mat samples(n_traj * horizon, model.hidden());
    for (Index i = 0; i < n_traj; ++i) {
        const Trajectory traj = generate_trajectory(task, seed + static_cast<std::uint64_t>(i), horizon);
        const ForwardResult fwd = forward(model, traj.inputs, horizon);
        for (Index t = 1; t <= horizon; ++t) {
            samples.row(i * horizon + (t - 1)) = fwd.hidden.col(t).transpose();
        }
    }
    return samples;
}

/// Fixed point h* of h -> tanh(W_hh h + b) with the local Jacobian
/// diag(1 - tanh^2(W_hh h* + b)) * W_hh.
struct FixedPointResult {
    Vec h_star;
    double residual = 0.0;
    Mat jacobian;
    bool converged = false;
};

namespace detail {

inline double fixed_point_objective(const ElmanRnn& m, const Vec& x, Vec& residual) {
    residual = (m.w_hh * x + m.b).array().tanh().matrix() - x;
    return residual.squaredNorm();
}

} // namespace detail

/// Gradient descent with Armijo backtracking on q(x) = |tanh(W_hh x + b) - x|^2
/// from the origin plus n_inits seeded random starts; solutions closer than
/// 1e-4 are merged. Non-converged starts are reported with their final
/// residual.
inline std::vector<FixedPointResult> find_fixed_points(const ElmanRnn& model, Index n_inits,
                                                       double tolerance = 1e-6,
                                                       int max_iters = 10000,
                                                       std::uint64_t seed = 0) {
    model.validate();
    const Index n = model.hidden();
    Rng rng(seed);

    std::vector<Vec> starts;
    starts.push_back(Vec::Zero(n));
    for (Index i = 0; i < n_inits; ++i) starts.push_back(rng.uniform_vec(n, -1.0, 1.0));

    const double armijo = 1e-4;
    std::vector<FixedPointResult> results;
    for (const Vec& start : starts) {
        Vec x = start;
        Vec residual;
        double q = detail::fixed_point_objective(model, x, residual);
        for (int it = 0; it < max_iters && std::sqrt(q) > tolerance; ++it) {
            const Vec pre = model.w_hh * x + model.b;
            const Vec gain = Vec::Ones(n) - pre.array().tanh().square().matrix();
            const Mat jac = gain.asDiagonal() * model.w_hh - Mat::Identity(n, n);
            const Vec grad = 2.0 * jac.transpose() * residual;
            const double grad_sq = grad.squaredNorm();
            if (grad_sq == 0.0) break;

            double step = 1.0;
            bool moved = false;
            while (step > 1e-16) {
                Vec trial = x - step * grad;
                Vec trial_residual;
                const double trial_q = detail::fixed_point_objective(model, trial, trial_residual);
                if (trial_q <= q - armijo * step * grad_sq) {
                    x = std::move(trial);
                    residual = std::move(trial_residual);
                    q = trial_q;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }

        FixedPointResult result;
        result.h_star = x;
        result.residual = std::sqrt(q);
        result.converged = result.residual <= tolerance;
        const Vec pre = model.w_hh * x + model.b;
        const Vec gain = Vec::Ones(n) - pre.array().tanh().square().matrix();
        result.jacobian = gain.asDiagonal() * model.w_hh;

        bool duplicate = false;
        for (const FixedPointResult& kept : results) {
            if ((kept.h_star - result.h_star).norm() < 1e-4) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) results.push_back(std::move(result));
    }
    return results;
}

/// Substrate-coordinate view of a hidden-state trace: column t of
/// `coordinates` is pinv(Psi) h(t), reshaped per step into the s x d lattice by
/// `step`. Optional normalization scales each variable-memory block to unit
/// standard deviation across the trace.
struct ProjectedTrace {
    Mat coordinates; // (s*d) x T
    Index s = 0;
    Index d = 0;
    bool normalized = false;

    Mat step(Index t) const {
        Mat lattice(s, d);
        for (Index i = 0; i < s; ++i) lattice.row(i) = coordinates.col(t).segment(i * d, d).transpose();
        return lattice;
    }
};

inline ProjectedTrace project_hidden(const BasisRecovery& recovery, const Mat& h_trace,
                                     bool normalize_subspaces = false) {
    if (h_trace.rows() != recovery.psi.rows()) {
        throw std::invalid_argument("project_hidden: hidden dimension mismatch");
    }
    ProjectedTrace trace;
    trace.s = recovery.s;
    trace.d = recovery.d;
    trace.coordinates = pinv(recovery.psi) * h_trace;
    if (normalize_subspaces) {
        trace.normalized = true;
        for (Index k = 0; k < recovery.s; ++k) {
            auto block = trace.coordinates.middleRows(k * recovery.d, recovery.d);
            const double mean = block.mean();
            const double variance =
                (block.array() - mean).square().sum() / static_cast<double>(block.size());
            const double stddev = std::sqrt(variance);
            if (stddev > 1e-30) block /= stddev;
        }
    }
    return trace;
}

/// W_hh re-expressed in the recovered basis, [Psi | Psi_perp]^+ W_hh [Psi | Psi_perp].
/// For a converged model the top-left s*d block shows the shift + boundary
/// structure of the wave operator. k_perp < 0 keeps every stored component.
inline Mat transform_weights(const BasisRecovery& recovery, const Mat& w_hh, Index k_perp = -1) {
    if (w_hh.rows() != recovery.psi.rows() || w_hh.cols() != recovery.psi.rows()) {
        throw std::invalid_argument("transform_weights: W_hh shape mismatch");
    }
    const Index keep = k_perp < 0 ? recovery.psi_perp.cols()
                                  : std::min<Index>(k_perp, recovery.psi_perp.cols());
    Mat basis(recovery.psi.rows(), recovery.psi.cols() + keep);
    basis.leftCols(recovery.psi.cols()) = recovery.psi;
    basis.rightCols(keep) = recovery.psi_perp.leftCols(keep);
    return pinv(basis) * w_hh * basis;
}

/// Trains while probing the input gradients of a fixed held-out trajectory, so
/// the decay-rate collapse can be compared against the spectral-radius
/// crossing of W_hh.
struct GradientStudy {
    ElmanRnn model;
    TrainRecord record;
    std::vector<int> probe_iterations;
    Mat norms_by_input; // probes x s
    std::vector<double> decay_rates;
    std::vector<double> max_abs_eigenvalues; // sampled at the same probes
    int first_collapse_iteration = -1; // first probe with decay rate < 0.1
    int first_crossing_iteration = -1; // first probe with max|eig| > 1
};

inline GradientStudy gradient_study(const HdsSpec& task, const TrainConfig& cfg, int probe_every) {
    if (probe_every < 1) throw std::invalid_argument("gradient_study: probe_every must be >= 1");
    task.validate();

    const Trajectory held_out =
        generate_trajectory(task, cfg.seed ^ 0xD1B54A32D192ED03ull, task.s + 2);
    const Index tau = task.s + 1;

    GradientStudy study;
    std::vector<std::vector<double>> norm_rows;
    const auto probe = [&](int iteration, const ElmanRnn& model) {
        const InputGradients grads = input_gradients(model, held_out, tau);
        study.probe_iterations.push_back(iteration);
        norm_rows.push_back(grads.norms);
        study.decay_rates.push_back(grads.decay_rate);
        study.max_abs_eigenvalues.push_back(max_abs_eigenvalue(model.w_hh));
    };

    auto [model, record] = detail::train_loop(task, cfg, probe, probe_every);
    study.model = std::move(model);
    study.record = std::move(record);

    study.norms_by_input = Mat::Zero(static_cast<Index>(norm_rows.size()), task.s);
    for (std::size_t i = 0; i < norm_rows.size(); ++i) {
        for (Index t = 0; t < task.s; ++t) {
            study.norms_by_input(static_cast<Index>(i), t) = norm_rows[i][static_cast<std::size_t>(t)];
        }
    }
    for (std::size_t i = 0; i < study.probe_iterations.size(); ++i) {
        if (study.first_collapse_iteration < 0 && study.decay_rates[i] < 0.1) {
            study.first_collapse_iteration = study.probe_iterations[i];
        }
        if (study.first_crossing_iteration < 0 && study.max_abs_eigenvalues[i] > 1.0) {
            study.first_crossing_iteration = study.probe_iterations[i];
        }
    }
    return study;
}

} // namespace wavemem
