#pragma once

// From-scratch Elman RNN with full BPTT, Adam, global-norm gradient clipping
// and the adaptive time-horizon curriculum. Training is single-threaded and a
// pure function of (task, config): the same seed gives byte-identical weights.

#include "wavemem/hds.hpp"

#include <deque>
#include <functional>
#include <utility>

namespace wavemem {

struct training_diverged : numerical_error {
    int iteration;
    explicit training_diverged(int it)
        : numerical_error("training diverged: non-finite loss at iteration " + std::to_string(it)),
          iteration(it) {}
};

/// h(t) = tanh(W_hh h(t-1) + W_uh u(t) + b), y(t) = W_r h(t).
/// h(0) is the zero vector and is never trained.
struct ElmanRnn {
    Mat w_hh; // n x n
    Mat w_uh; // n x d
    Mat w_r;  // d_out x n
    Vec b;    // n, all zero when has_bias is false
    bool has_bias = false;

    Index hidden() const { return w_hh.rows(); }
    Index input_dim() const { return w_uh.cols(); }
    Index output_dim() const { return w_r.rows(); }

    void validate() const {
        const Index n = w_hh.rows();
        if (n < 1 || w_hh.cols() != n || w_uh.rows() != n || w_r.cols() != n || b.size() != n) {
            throw std::invalid_argument("ElmanRnn: inconsistent weight dimensions");
        }
        require_finite(w_hh, "ElmanRnn.w_hh");
        require_finite(w_uh, "ElmanRnn.w_uh");
        require_finite(w_r, "ElmanRnn.w_r");
        if (!b.allFinite()) throw std::invalid_argument("ElmanRnn.b: non-finite entries");
        if (!has_bias && b.cwiseAbs().maxCoeff() != 0.0) {
            throw std::invalid_argument("ElmanRnn: bias disabled but nonzero");
        }
    }
};

enum class InitScheme { Uniform, Gaussian };

/// Adaptive training-horizon settings: grow by gamma while the rolling
/// per-timestep loss stays at or below epsilon across the whole current
/// window, shrink by gamma otherwise, always within [h0, hmax].
struct CurriculumConfig {
    double h0 = 10.0;
    double hmax = 100.0;
    double gamma = 1.2;
    double epsilon = 3e-2;

    void validate() const {
        if (!(h0 >= 1.0) || !(hmax >= h0)) throw std::invalid_argument("curriculum: need 1 <= h0 <= hmax");
        if (!(gamma > 1.0)) throw std::invalid_argument("curriculum: gamma must exceed 1");
        if (!(epsilon > 0.0)) throw std::invalid_argument("curriculum: epsilon must be positive");
    }
};

struct TrainConfig {
    Index hidden = 64;
    double learning_rate = 1e-3;
    Index batch_size = 64;
    int iterations = 10000;
    double weight_decay = 0.0; // L2 penalty added to gradients inside Adam
    double grad_clip = 1.0;    // global-norm threshold; <= 0 disables
    CurriculumConfig curriculum;
    InitScheme init = InitScheme::Uniform;
    bool bias = false;
    std::uint64_t seed = 0;
    int spectrum_every = 250;     // max|eig(W_hh)| sampling period; <= 0 disables
    double loss_ema_decay = 0.98; // rolling per-timestep loss
    int rolling_window = 50;      // batches in the reported rolling loss

    // Adam moments; the paper names only "Adam optimization".
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const {
        if (hidden < 1 || batch_size < 1 || iterations < 0) {
            throw std::invalid_argument("TrainConfig: hidden/batch/iterations out of range");
        }
        if (!(learning_rate > 0.0) || weight_decay < 0.0) {
            throw std::invalid_argument("TrainConfig: bad learning rate or weight decay");
        }
        if (!(loss_ema_decay > 0.0 && loss_ema_decay < 1.0) || rolling_window < 1) {
            throw std::invalid_argument("TrainConfig: bad rolling-average settings");
        }
        curriculum.validate();
    }
};

struct TrainRecord {
    std::vector<double> loss;         // batch loss per iteration
    std::vector<double> rolling_loss; // mean over the trailing window
    std::vector<double> horizon;      // H_n per iteration (real-valued)
    std::vector<int> spectrum_iterations;
    std::vector<double> max_abs_eigenvalue;
    Vec loss_by_timestep; // final rolling L(t); NaN where never evaluated
};

inline ElmanRnn init_model(Index hidden, Index d, InitScheme scheme, bool bias, Rng& rng) {
    if (hidden < 1 || d < 1) throw std::invalid_argument("init_model: bad dimensions");
    ElmanRnn m;
    m.has_bias = bias;
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
    if (scheme == InitScheme::Uniform) {
        m.w_uh = rng.uniform_mat(hidden, d, -k, k);
        m.w_hh = rng.uniform_mat(hidden, hidden, -k, k);
        m.w_r = rng.uniform_mat(d, hidden, -k, k);
        m.b = bias ? Vec(rng.uniform_vec(hidden, -k, k)) : Vec(Vec::Zero(hidden));
    } else {
        m.w_uh = rng.gaussian_mat(hidden, d, k);
        m.w_hh = rng.gaussian_mat(hidden, hidden, k);
        m.w_r = rng.gaussian_mat(d, hidden, k);
        m.b = bias ? Vec(k * Vec::NullaryExpr(hidden, [&](Index) { return rng.gaussian(); }))
                   : Vec(Vec::Zero(hidden));
    }
    return m;
}

/// Single-sequence rollout: u(t) = inputs[t-1] during the input phase, zero
/// afterwards. Returns the full state trace (column t of `hidden` is h(t),
/// column 0 the zero initial state) and outputs y(1..horizon).
struct ForwardResult {
    Mat hidden; // n x (horizon + 1)
    Mat output; // d_out x horizon
};

inline ForwardResult forward(const ElmanRnn& model, std::span<const Vec> inputs, Index horizon) {
    model.validate();
    const Index s = static_cast<Index>(inputs.size());
    if (horizon < s) throw std::invalid_argument("forward: horizon shorter than the input phase");

    ForwardResult r;
    r.hidden = Mat::Zero(model.hidden(), horizon + 1);
    r.output = Mat::Zero(model.output_dim(), horizon);
    for (Index t = 1; t <= horizon; ++t) {
        Vec a = model.w_hh * r.hidden.col(t - 1);
        if (t <= s) {
            const Vec& u = inputs[static_cast<std::size_t>(t - 1)];
            if (u.size() != model.input_dim()) throw std::invalid_argument("forward: input dimension");
            a += model.w_uh * u;
        }
        if (model.has_bias) a += model.b;
        r.hidden.col(t) = a.array().tanh();
        r.output.col(t - 1) = model.w_r * r.hidden.col(t);
    }
    return r;
}

namespace detail {

struct BatchTrace {
    std::vector<Mat> h; // h[t] is n x B, t = 0..T
    std::vector<Mat> y; // y[t-1] is d_out x B, t = 1..T
};

inline BatchTrace forward_batch(const ElmanRnn& m, const std::vector<Mat>& inputs, Index total) {
    const Index s = static_cast<Index>(inputs.size());
    const Index batch = inputs.empty() ? 1 : inputs.front().cols();
    BatchTrace trace;
    trace.h.resize(static_cast<std::size_t>(total) + 1);
    trace.y.resize(static_cast<std::size_t>(total));
    trace.h[0] = Mat::Zero(m.hidden(), batch);
    for (Index t = 1; t <= total; ++t) {
        Mat a = m.w_hh * trace.h[static_cast<std::size_t>(t - 1)];
        if (t <= s) a += m.w_uh * inputs[static_cast<std::size_t>(t - 1)];
        if (m.has_bias) a.colwise() += m.b;
        trace.h[static_cast<std::size_t>(t)] = a.array().tanh();
        trace.y[static_cast<std::size_t>(t - 1)] = m.w_r * trace.h[static_cast<std::size_t>(t)];
    }
    return trace;
}

struct WeightGrads {
    Mat w_hh, w_uh, w_r;
    Vec b;

    static WeightGrads zero(const ElmanRnn& m) {
        return {Mat::Zero(m.w_hh.rows(), m.w_hh.cols()), Mat::Zero(m.w_uh.rows(), m.w_uh.cols()),
                Mat::Zero(m.w_r.rows(), m.w_r.cols()), Vec::Zero(m.b.size())};
    }

    double squared_norm(bool include_bias) const {
        double sq = w_hh.squaredNorm() + w_uh.squaredNorm() + w_r.squaredNorm();
        if (include_bias) sq += b.squaredNorm();
        return sq;
    }

    void scale(double factor) {
        w_hh *= factor;
        w_uh *= factor;
        w_r *= factor;
        b *= factor;
    }
};

struct BpttResult {
    WeightGrads grads;
    double loss = 0.0;
    Vec per_step_loss; // index t-1 -> MSE of output step s+t
};

/// Loss: mean squared error over the output phase, C = 1/(B*H*d) * sum |y - x|^2
/// with targets[t] matched against output step s+1+t.
inline BpttResult bptt_batch(const ElmanRnn& m, const std::vector<Mat>& inputs,
                             const BatchTrace& trace, const std::vector<Mat>& targets, Index s) {
    const Index total = static_cast<Index>(trace.y.size());
    const Index window = static_cast<Index>(targets.size());
    const Index batch = trace.h[0].cols();
    const Index out = m.output_dim();
    const double norm = 1.0 / (static_cast<double>(batch) * static_cast<double>(window)
                               * static_cast<double>(out));

    BpttResult r;
    r.grads = WeightGrads::zero(m);
    r.per_step_loss = Vec::Zero(window);

    Mat dh = Mat::Zero(m.hidden(), batch);
    for (Index t = total; t >= 1; --t) {
        if (t > s) {
            const Index idx = t - s - 1;
            const Mat diff =
                trace.y[static_cast<std::size_t>(t - 1)] - targets[static_cast<std::size_t>(idx)];
            r.per_step_loss(idx) =
                diff.squaredNorm() / (static_cast<double>(batch) * static_cast<double>(out));
            const Mat dy = 2.0 * norm * diff;
            r.grads.w_r.noalias() += dy * trace.h[static_cast<std::size_t>(t)].transpose();
            dh.noalias() += m.w_r.transpose() * dy;
        }
        const Mat da =
            dh.cwiseProduct(Mat::Ones(m.hidden(), batch)
                            - trace.h[static_cast<std::size_t>(t)].cwiseProduct(
                                  trace.h[static_cast<std::size_t>(t)]));
        r.grads.w_hh.noalias() += da * trace.h[static_cast<std::size_t>(t - 1)].transpose();
        if (t <= s) r.grads.w_uh.noalias() += da * inputs[static_cast<std::size_t>(t - 1)].transpose();
        if (m.has_bias) r.grads.b += da.rowwise().sum();
        dh.noalias() = m.w_hh.transpose() * da;
    }
    r.loss = r.per_step_loss.sum() / static_cast<double>(window);
    return r;
}

/// Clip to the global norm threshold; returns the pre-clip norm.
inline double clip_global_norm(WeightGrads& g, double threshold, bool include_bias) {
    const double total = std::sqrt(g.squared_norm(include_bias));
    if (threshold > 0.0 && total > threshold) g.scale(threshold / total);
    return total;
}

struct AdamState {
    WeightGrads m, v;
    int t = 0;

    static AdamState zero(const ElmanRnn& model) {
        return {WeightGrads::zero(model), WeightGrads::zero(model), 0};
    }
};

inline void adam_step(ElmanRnn& model, const WeightGrads& grads, AdamState& state,
                      const TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, state.t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, state.t);
    auto update = [&](Mat& theta, const Mat& g_raw, Mat& m1, Mat& m2) {
        const Mat g = cfg.weight_decay > 0.0 ? Mat(g_raw + cfg.weight_decay * theta) : g_raw;
        m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * g;
        m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
        const Mat mhat = m1 / bc1;
        const Mat vhat = m2 / bc2;
        theta -= cfg.learning_rate
                 * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(vhat.rows(), vhat.cols(),
                                                                       cfg.adam_epsilon));
    };
    update(model.w_hh, grads.w_hh, state.m.w_hh, state.v.w_hh);
    update(model.w_uh, grads.w_uh, state.m.w_uh, state.v.w_uh);
    update(model.w_r, grads.w_r, state.m.w_r, state.v.w_r);
    if (model.has_bias) {
        Mat b = model.b, gb = grads.b, mb = state.m.b, vb = state.v.b;
        update(b, gb, mb, vb);
        model.b = b;
        state.m.b = mb;
        state.v.b = vb;
    }
}

/// Horizon levels live on the exact gamma-grid h0 * gamma^k so that successive
/// horizons always differ by a factor of gamma, 1/gamma or exactly 1, capped
/// at the largest grid point not exceeding hmax.
struct CurriculumState {
    CurriculumConfig cfg;
    int level = 0;
    int max_level = 0;

    explicit CurriculumState(const CurriculumConfig& c) : cfg(c) {
        while (cfg.h0 * std::pow(cfg.gamma, max_level + 1) <= cfg.hmax * (1.0 + 1e-12)) ++max_level;
    }

    double horizon() const { return cfg.h0 * std::pow(cfg.gamma, level); }
    Index window() const { return static_cast<Index>(std::llround(horizon())); }

    void adapt(bool all_below_threshold) {
        if (all_below_threshold) {
            if (level < max_level) ++level;
        } else if (level > 0) {
            --level;
        }
    }
};

/// One fresh batch of task trajectories: inputs[t] and targets[t] are d x B.
struct TrajectoryBatch {
    std::vector<Mat> inputs;  // s entries
    std::vector<Mat> targets; // window entries
};

inline TrajectoryBatch sample_batch(const HdsSpec& task, Rng& rng, Index batch, Index window) {
    TrajectoryBatch out;
    out.inputs.assign(static_cast<std::size_t>(task.s), Mat::Zero(task.d, batch));
    out.targets.assign(static_cast<std::size_t>(window), Mat::Zero(task.d, batch));
    for (Index b = 0; b < batch; ++b) {
        for (int attempt = 0;; ++attempt) {
            std::vector<Vec> window_states;
            window_states.reserve(static_cast<std::size_t>(task.s));
            for (Index i = 0; i < task.s; ++i) {
                window_states.push_back(task.domain == Domain::Binary
                                            ? rng.sign_vec(task.d)
                                            : rng.uniform_vec(task.d, -1.0, 1.0));
            }
            try {
                std::vector<Vec> states = window_states;
                std::vector<Vec> targets;
                targets.reserve(static_cast<std::size_t>(window));
                for (Index t = 0; t < window; ++t) {
                    Vec next = apply_boundary(task.boundary, states, task.s, task.d);
                    targets.push_back(next);
                    states.erase(states.begin());
                    states.push_back(std::move(next));
                }
                for (Index i = 0; i < task.s; ++i) {
                    out.inputs[static_cast<std::size_t>(i)].col(b) =
                        window_states[static_cast<std::size_t>(i)];
                }
                for (Index t = 0; t < window; ++t) {
                    out.targets[static_cast<std::size_t>(t)].col(b) =
                        targets[static_cast<std::size_t>(t)];
                }
                break;
            } catch (const zero_preactivation&) {
                if (attempt >= 99) throw numerical_error("sample_batch: 100 resamples hit sign(0)");
            }
        }
    }
    return out;
}

using TrainProbe = std::function<void(int iteration, const ElmanRnn& model)>;

inline std::pair<ElmanRnn, TrainRecord> train_loop(const HdsSpec& task, const TrainConfig& cfg,
                                                   const TrainProbe& probe, int probe_every) {
    task.validate();
    cfg.validate();

    Rng rng(cfg.seed);
    ElmanRnn model = init_model(cfg.hidden, task.d, cfg.init, cfg.bias, rng);
    AdamState adam = AdamState::zero(model);
    CurriculumState curriculum(cfg.curriculum);

    TrainRecord record;
    const Index max_window =
        static_cast<Index>(std::llround(cfg.curriculum.h0
                                        * std::pow(cfg.curriculum.gamma, curriculum.max_level)));
    record.loss_by_timestep = Vec::Constant(max_window, std::numeric_limits<double>::quiet_NaN());
    record.loss.reserve(static_cast<std::size_t>(cfg.iterations));

    std::deque<double> rolling;
    double rolling_sum = 0.0;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        if (cfg.spectrum_every > 0 && iter % cfg.spectrum_every == 0) {
            record.spectrum_iterations.push_back(iter);
            record.max_abs_eigenvalue.push_back(max_abs_eigenvalue(model.w_hh));
        }
        if (probe && probe_every > 0 && iter % probe_every == 0) probe(iter, model);

        const Index window = curriculum.window();
        const TrajectoryBatch batch = sample_batch(task, rng, cfg.batch_size, window);
        const BatchTrace trace = forward_batch(model, batch.inputs, task.s + window);
        BpttResult bptt = bptt_batch(model, batch.inputs, trace, batch.targets, task.s);
        if (!std::isfinite(bptt.loss)) throw training_diverged(iter);

        clip_global_norm(bptt.grads, cfg.grad_clip, model.has_bias);
        adam_step(model, bptt.grads, adam, cfg);

        record.loss.push_back(bptt.loss);
        record.horizon.push_back(curriculum.horizon());
        rolling.push_back(bptt.loss);
        rolling_sum += bptt.loss;
        if (static_cast<int>(rolling.size()) > cfg.rolling_window) {
            rolling_sum -= rolling.front();
            rolling.pop_front();
        }
        record.rolling_loss.push_back(rolling_sum / static_cast<double>(rolling.size()));

        bool all_below = true;
        for (Index t = 0; t < window; ++t) {
            double& ema = record.loss_by_timestep(t);
            ema = std::isnan(ema) ? bptt.per_step_loss(t)
                                  : cfg.loss_ema_decay * ema
                                        + (1.0 - cfg.loss_ema_decay) * bptt.per_step_loss(t);
            all_below = all_below && ema <= cfg.curriculum.epsilon;
        }
        curriculum.adapt(all_below);
    }

    if (cfg.spectrum_every > 0) {
        record.spectrum_iterations.push_back(cfg.iterations);
        record.max_abs_eigenvalue.push_back(max_abs_eigenvalue(model.w_hh));
    }
    if (probe && probe_every > 0) probe(cfg.iterations, model);
    return {std::move(model), std::move(record)};
}

} // namespace detail

/// Train an Elman RNN on the task with BPTT + Adam under the horizon
/// curriculum. Deterministic given cfg.seed; throws training_diverged (with
/// the iteration index) if the loss goes non-finite.
inline std::pair<ElmanRnn, TrainRecord> bptt_train(const HdsSpec& task, const TrainConfig& cfg) {
    return detail::train_loop(task, cfg, nullptr, 0);
}

/// Gradient norms of the timestep-tau cost C = |y(tau) - x(tau)|^2 with
/// respect to each input vector, plus the fitted exponential decay rate
/// (positive = decaying with input age; least-squares slope of log-norm
/// against s+1-t, negated). NaN when fewer than two norms are positive.
struct InputGradients {
    std::vector<double> norms; // index t-1 -> |dC/du(t)|, t = 1..s
    double decay_rate = std::numeric_limits<double>::quiet_NaN();
};

inline InputGradients input_gradients(const ElmanRnn& model, const Trajectory& traj, Index tau) {
    model.validate();
    const Index s = static_cast<Index>(traj.inputs.size());
    if (tau <= s || tau > traj.horizon) {
        throw std::invalid_argument("input_gradients: tau must lie in the output phase");
    }
    const Vec& target = traj.targets.at(static_cast<std::size_t>(tau - s - 1));

    const ForwardResult fwd = forward(model, traj.inputs, tau);
    InputGradients out;
    out.norms.assign(static_cast<std::size_t>(s), 0.0);

    Vec dh = Vec::Zero(model.hidden());
    for (Index t = tau; t >= 1; --t) {
        if (t == tau) {
            const Vec dy = 2.0 * (fwd.output.col(t - 1) - target);
            dh += model.w_r.transpose() * dy;
        }
        const Vec da =
            dh.cwiseProduct(Vec::Ones(model.hidden()) - fwd.hidden.col(t).cwiseProduct(fwd.hidden.col(t)));
        if (t <= s) out.norms[static_cast<std::size_t>(t - 1)] = (model.w_uh.transpose() * da).norm();
        dh = model.w_hh.transpose() * da;
    }

    // Least-squares fit of log|g_t| against the input age s+1-t.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (Index t = 1; t <= s; ++t) {
        const double g = out.norms[static_cast<std::size_t>(t - 1)];
        if (g <= 0.0) continue;
        const double x = static_cast<double>(s + 1 - t);
        const double y = std::log(g);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++count;
    }
    if (count >= 2) {
        const double denom = count * sxx - sx * sx;
        if (denom != 0.0) out.decay_rate = -(count * sxy - sx * sy) / denom;
    }
    return out;
}

/// Bitwise sign accuracy over fresh trajectories; sign(0) counts as wrong.
/// per_vector scores a timestep only when every coordinate is correct.
struct AccuracyReport {
    double per_bit = 0.0;
    double per_vector = 0.0;
};

inline AccuracyReport evaluate_accuracy(const ElmanRnn& model, const HdsSpec& task, Index n_eval,
                                        Index horizon, std::uint64_t seed) {
    model.validate();
    task.validate();
    if (task.domain != Domain::Binary) {
        throw std::invalid_argument("accuracy: task domain must be binary");
    }
    if (n_eval < 1 || horizon <= task.s) throw std::invalid_argument("accuracy: bad eval dimensions");

    std::int64_t bit_hits = 0, bit_total = 0, vec_hits = 0, vec_total = 0;
    for (Index e = 0; e < n_eval; ++e) {
        const Trajectory traj = generate_trajectory(task, seed + static_cast<std::uint64_t>(e), horizon);
        const ForwardResult fwd = forward(model, traj.inputs, horizon);
        for (Index t = task.s + 1; t <= horizon; ++t) {
            const Vec& x = traj.targets[static_cast<std::size_t>(t - task.s - 1)];
            bool whole_vector = true;
            for (Index j = 0; j < task.d; ++j) {
                const double y = fwd.output(j, t - 1);
                const bool hit = (y > 0.0 && x(j) > 0.0) || (y < 0.0 && x(j) < 0.0);
                bit_hits += hit ? 1 : 0;
                whole_vector = whole_vector && hit;
            }
            bit_total += task.d;
            vec_hits += whole_vector ? 1 : 0;
            vec_total += 1;
        }
    }
    return {static_cast<double>(bit_hits) / static_cast<double>(bit_total),
            static_cast<double>(vec_hits) / static_cast<double>(vec_total)};
}

inline double accuracy(const ElmanRnn& model, const HdsSpec& task, Index n_eval, Index horizon,
                       std::uint64_t seed) {
    return evaluate_accuracy(model, task, n_eval, horizon, seed).per_bit;
}

} // namespace wavemem
