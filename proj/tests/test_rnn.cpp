#include "wavemem/rnn.hpp"
#include "wavemem/lbc.hpp"
#include "wavemem/tasks.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace wavemem;

namespace {

ElmanRnn zero_model(Index n, Index d) {
    ElmanRnn m;
    m.w_hh = Mat::Zero(n, n);
    m.w_uh = Mat::Zero(n, d);
    m.w_r = Mat::Zero(d, n);
    m.b = Vec::Zero(n);
    return m;
}

/// Exact sign-preserving repeat-copy network: W_hh is the wave operator,
/// inputs enter through subspace s, W_r reads subspace s. tanh only shrinks
/// magnitudes, so every readout keeps the right sign.
ElmanRnn exact_repeat_copy_model(Index s, Index d, Index n) {
    const PhiOperator phi = build_phi_repeat_copy(s, d);
    ElmanRnn m;
    m.w_hh = Mat::Zero(n, n);
    m.w_hh.topLeftCorner(s * d, s * d) = phi.coords;
    m.w_uh = Mat::Zero(n, d);
    m.w_uh.block((s - 1) * d, 0, d, d) = Mat::Identity(d, d);
    m.w_r = Mat::Zero(d, n);
    m.w_r.block(0, (s - 1) * d, d, d) = Mat::Identity(d, d);
    m.b = Vec::Zero(n);
    return m;
}

double batch_loss(const ElmanRnn& model, const detail::TrajectoryBatch& batch, Index s) {
    const Index total = s + static_cast<Index>(batch.targets.size());
    const detail::BatchTrace trace = detail::forward_batch(model, batch.inputs, total);
    detail::BpttResult result = detail::bptt_batch(model, batch.inputs, trace, batch.targets, s);
    return result.loss;
}

} // namespace

TEST_CASE("forward: zero weights give zero states and outputs", "[rnn]") {
    const ElmanRnn m = zero_model(5, 2);
    const std::vector<Vec> inputs = {Vec::Ones(2), Vec::Ones(2)};
    const ForwardResult r = forward(m, inputs, 6);
    CHECK(r.hidden.isZero(0.0));
    CHECK(r.output.isZero(0.0));
}

TEST_CASE("forward: pure feed-through without recurrence", "[rnn]") {
    const Index d = 3;
    ElmanRnn m = zero_model(d, d);
    m.w_uh = Mat::Identity(d, d);
    m.w_r = Mat::Identity(d, d);
    Rng rng(2);
    const Vec u = rng.uniform_vec(d, -1.0, 1.0);
    const std::vector<Vec> inputs = {u};
    const ForwardResult r = forward(m, inputs, 2);
    CHECK((r.output.col(0) - u.array().tanh().matrix()).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(r.output.col(1).isZero(0.0));
}

TEST_CASE("forward: outputs respect the row norms of W_r", "[rnn]") {
    Rng rng(12);
    ElmanRnn m;
    m.w_hh = rng.gaussian_mat(8, 8);
    m.w_uh = rng.gaussian_mat(8, 3);
    m.w_r = rng.gaussian_mat(3, 8);
    m.b = Vec::Zero(8);
    std::vector<Vec> inputs;
    for (int i = 0; i < 3; ++i) inputs.push_back(rng.sign_vec(3));
    const ForwardResult r = forward(m, inputs, 10);
    for (Index t = 0; t < 10; ++t) {
        for (Index j = 0; j < 3; ++j) {
            CHECK(std::fabs(r.output(j, t)) <= m.w_r.row(j).cwiseAbs().sum());
        }
    }
}

TEST_CASE("forward: hidden activations stay inside (-1, 1)", "[rnn]") {
    Rng rng(9);
    ElmanRnn m;
    m.w_hh = rng.uniform_mat(10, 10, -0.5, 0.5);
    m.w_uh = rng.uniform_mat(10, 2, -0.5, 0.5);
    m.w_r = rng.uniform_mat(2, 10, -0.5, 0.5);
    m.b = Vec::Zero(10);
    std::vector<Vec> inputs = {rng.sign_vec(2), rng.sign_vec(2)};
    const ForwardResult r = forward(m, inputs, 12);
    for (Index t = 1; t <= 12; ++t) {
        CHECK(r.hidden.col(t).cwiseAbs().maxCoeff() < 1.0);
    }
}

TEST_CASE("BPTT weight gradients match central finite differences", "[rnn]") {
    const Index s = 4, d = 2, n = 12, batch = 3, window = 4;
    const TaskDef task = repeat_copy_task(s, d);
    Rng data_rng(31);
    const detail::TrajectoryBatch batch_data = detail::sample_batch(task.spec, data_rng, batch, window);

    Rng init_rng(77);
    ElmanRnn model = init_model(n, d, InitScheme::Uniform, true, init_rng);
    model.b = init_rng.uniform_vec(n, -0.2, 0.2);

    const detail::BatchTrace trace = detail::forward_batch(model, batch_data.inputs, s + window);
    const detail::BpttResult analytic =
        detail::bptt_batch(model, batch_data.inputs, trace, batch_data.targets, s);

    const double step = 1e-5;
    auto check_grad = [&](Mat& theta, const Mat& grad) {
        for (Index r = 0; r < theta.rows(); ++r) {
            for (Index c = 0; c < theta.cols(); ++c) {
                const double saved = theta(r, c);
                theta(r, c) = saved + step;
                const double up = batch_loss(model, batch_data, s);
                theta(r, c) = saved - step;
                const double down = batch_loss(model, batch_data, s);
                theta(r, c) = saved;
                const double fd = (up - down) / (2.0 * step);
                const double scale = std::max({1e-8, std::fabs(fd), std::fabs(grad(r, c))});
                REQUIRE(std::fabs(grad(r, c) - fd) / scale <= 1e-4);
            }
        }
    };
    check_grad(model.w_hh, analytic.grads.w_hh);
    check_grad(model.w_uh, analytic.grads.w_uh);
    check_grad(model.w_r, analytic.grads.w_r);
    for (Index i = 0; i < n; ++i) {
        const double saved = model.b(i);
        model.b(i) = saved + step;
        const double up = batch_loss(model, batch_data, s);
        model.b(i) = saved - step;
        const double down = batch_loss(model, batch_data, s);
        model.b(i) = saved;
        const double fd = (up - down) / (2.0 * step);
        const double scale = std::max({1e-8, std::fabs(fd), std::fabs(analytic.grads.b(i))});
        REQUIRE(std::fabs(analytic.grads.b(i) - fd) / scale <= 1e-4);
    }
}

TEST_CASE("input gradients match central finite differences", "[rnn]") {
    const Index s = 3, d = 2, n = 10;
    const TaskDef task = repeat_copy_task(s, d);
    Trajectory traj = generate_trajectory(task.spec, 5, s + 4);
    Rng init_rng(11);
    const ElmanRnn model = init_model(n, d, InitScheme::Uniform, false, init_rng);
    const Index tau = s + 2;

    const InputGradients analytic = input_gradients(model, traj, tau);

    const double step = 1e-5;
    for (Index t = 1; t <= s; ++t) {
        Vec fd_grad(d);
        for (Index j = 0; j < d; ++j) {
            auto cost = [&](double delta) {
                Trajectory bumped = traj;
                bumped.inputs[static_cast<std::size_t>(t - 1)](j) += delta;
                const ForwardResult r = forward(model, bumped.inputs, tau);
                const Vec diff =
                    r.output.col(tau - 1) - traj.targets[static_cast<std::size_t>(tau - s - 1)];
                return diff.squaredNorm();
            };
            fd_grad(j) = (cost(step) - cost(-step)) / (2.0 * step);
        }
        const double scale = std::max(1e-8, fd_grad.norm());
        REQUIRE(std::fabs(analytic.norms[static_cast<std::size_t>(t - 1)] - fd_grad.norm()) / scale
                <= 1e-4);
    }
}

TEST_CASE("input_gradients: no recurrence kills every propagation path", "[rnn]") {
    // With W_hh = 0, the cost at any output-phase step reaches u(t) only
    // through at least one W_hh factor, so all s input gradients vanish; the
    // newest input needs exactly one recurrence hop, which a tiny W_hh
    // restores first.
    const Index s = 4, d = 2, n = 6;
    ElmanRnn m = zero_model(n, d);
    Rng rng(3);
    m.w_uh = rng.gaussian_mat(n, d);
    m.w_r = rng.gaussian_mat(d, n);

    const TaskDef task = repeat_copy_task(s, d);
    const Trajectory traj = generate_trajectory(task.spec, 8, s + 2);
    const InputGradients grads = input_gradients(m, traj, s + 1);
    for (Index t = 1; t <= s; ++t) CHECK(grads.norms[static_cast<std::size_t>(t - 1)] == 0.0);

    m.w_hh = 0.05 * Mat::Identity(n, n);
    const InputGradients one_hop = input_gradients(m, traj, s + 1);
    CHECK(one_hop.norms[static_cast<std::size_t>(s - 1)] > 0.0);
    for (Index t = 1; t < s; ++t) {
        CHECK(one_hop.norms[static_cast<std::size_t>(t - 1)]
              < one_hop.norms[static_cast<std::size_t>(s - 1)]);
    }
}

TEST_CASE("input_gradients: untrained models decay geometrically with age", "[rnn]") {
    const Index s = 8, d = 4, n = 64;
    const TaskDef task = repeat_copy_task(s, d);
    const Trajectory traj = generate_trajectory(task.spec, 21, s + 2);
    Rng rng(42);
    const ElmanRnn model = init_model(n, d, InitScheme::Uniform, false, rng);
    const InputGradients grads = input_gradients(model, traj, s + 1);
    CHECK(grads.decay_rate > 0.0);
}

TEST_CASE("input_gradients: tau must lie in the output phase", "[rnn]") {
    const TaskDef task = repeat_copy_task(3, 2);
    const Trajectory traj = generate_trajectory(task.spec, 1, 6);
    Rng rng(1);
    const ElmanRnn model = init_model(8, 2, InitScheme::Uniform, false, rng);
    CHECK_THROWS_AS(input_gradients(model, traj, 3), std::invalid_argument);
    CHECK_THROWS_AS(input_gradients(model, traj, 7), std::invalid_argument);
}

TEST_CASE("gradient clipping caps the global norm", "[rnn]") {
    Rng rng(5);
    ElmanRnn m = init_model(8, 2, InitScheme::Uniform, true, rng);
    detail::WeightGrads grads = detail::WeightGrads::zero(m);
    grads.w_hh = rng.gaussian_mat(8, 8, 10.0);
    grads.w_uh = rng.gaussian_mat(8, 2, 10.0);
    grads.w_r = rng.gaussian_mat(2, 8, 10.0);
    grads.b = 10.0 * Vec::Ones(8);

    const double before = detail::clip_global_norm(grads, 1.0, true);
    CHECK(before > 1.0);
    CHECK(std::sqrt(grads.squared_norm(true)) <= 1.0 + 1e-12);

    // Below the threshold nothing changes.
    detail::WeightGrads small = detail::WeightGrads::zero(m);
    small.w_hh(0, 0) = 0.25;
    detail::clip_global_norm(small, 1.0, true);
    CHECK(small.w_hh(0, 0) == 0.25);
}

TEST_CASE("bptt_train: zero iterations returns the seeded initialization", "[rnn]") {
    const TaskDef task = repeat_copy_task(3, 3);
    TrainConfig cfg;
    cfg.hidden = 12;
    cfg.iterations = 0;
    cfg.seed = 99;
    const auto [model, record] = bptt_train(task.spec, cfg);
    CHECK(record.loss.empty());

    Rng rng(99);
    const ElmanRnn expected = init_model(12, 3, InitScheme::Uniform, false, rng);
    CHECK(model.w_hh == expected.w_hh);
    CHECK(model.w_uh == expected.w_uh);
    CHECK(model.w_r == expected.w_r);
}

TEST_CASE("bptt_train: same seed gives bit-identical weights", "[rnn]") {
    const TaskDef task = repeat_copy_task(2, 2);
    TrainConfig cfg;
    cfg.hidden = 12;
    cfg.batch_size = 8;
    cfg.iterations = 40;
    cfg.spectrum_every = 20;
    cfg.seed = 7;
    const auto [a, record_a] = bptt_train(task.spec, cfg);
    const auto [b, record_b] = bptt_train(task.spec, cfg);
    CHECK(a.w_hh == b.w_hh);
    CHECK(a.w_uh == b.w_uh);
    CHECK(a.w_r == b.w_r);
    CHECK(record_a.loss == record_b.loss);
    CHECK(record_a.max_abs_eigenvalue == record_b.max_abs_eigenvalue);
}

TEST_CASE("bptt_train: loss drops on an easy task", "[rnn]") {
    const TaskDef task = repeat_copy_task(2, 2);
    TrainConfig cfg;
    cfg.hidden = 24;
    cfg.batch_size = 16;
    cfg.iterations = 400;
    cfg.spectrum_every = 0;
    cfg.seed = 3;
    const auto [model, record] = bptt_train(task.spec, cfg);
    const double early = record.rolling_loss[49];
    const double late = record.rolling_loss.back();
    CHECK(late < 0.25 * early);
}

TEST_CASE("bptt_train: curriculum horizons stay on the gamma grid within bounds", "[rnn]") {
    const TaskDef task = repeat_copy_task(1, 1); // trivially learnable
    TrainConfig cfg;
    cfg.hidden = 12;
    cfg.batch_size = 8;
    cfg.iterations = 600;
    cfg.spectrum_every = 0;
    cfg.seed = 13;
    const auto [model, record] = bptt_train(task.spec, cfg);

    bool grew = false;
    for (std::size_t i = 0; i < record.horizon.size(); ++i) {
        CHECK(record.horizon[i] >= cfg.curriculum.h0 - 1e-9);
        CHECK(record.horizon[i] <= cfg.curriculum.hmax + 1e-9);
        if (i > 0) {
            const double ratio = record.horizon[i] / record.horizon[i - 1];
            const bool ok = std::fabs(ratio - cfg.curriculum.gamma) <= 1e-9
                            || std::fabs(ratio - 1.0 / cfg.curriculum.gamma) <= 1e-9
                            || std::fabs(ratio - 1.0) <= 1e-9;
            CHECK(ok);
            grew = grew || ratio > 1.0;
        }
    }
    CHECK(grew); // the easy task must push the horizon up at least once
}

TEST_CASE("bptt_train: divergence is reported with its iteration", "[rnn]") {
    const TaskDef task = repeat_copy_task(2, 2);
    TrainConfig cfg;
    cfg.hidden = 8;
    cfg.batch_size = 4;
    cfg.iterations = 50;
    cfg.learning_rate = 1e300; // guaranteed blow-up
    cfg.grad_clip = 0.0;
    cfg.spectrum_every = 0;
    try {
        bptt_train(task.spec, cfg);
        FAIL("expected training_diverged");
    } catch (const training_diverged& e) {
        CHECK(e.iteration >= 0);
        CHECK(e.iteration < 50);
    }
}

TEST_CASE("init_model: uniform scheme respects the 1/sqrt(n) bound", "[rnn]") {
    Rng rng(17);
    const ElmanRnn m = init_model(25, 4, InitScheme::Uniform, false, rng);
    const double k = 1.0 / 5.0;
    CHECK(max_abs(m.w_hh) <= k);
    CHECK(max_abs(m.w_uh) <= k);
    CHECK(max_abs(m.w_r) <= k);
    CHECK(m.b.isZero(0.0));
}

TEST_CASE("accuracy: exact model scores 1.0, silent model 0.0", "[rnn]") {
    const Index s = 3, d = 2;
    const TaskDef task = repeat_copy_task(s, d);
    const ElmanRnn exact = exact_repeat_copy_model(s, d, 10);
    CHECK(accuracy(exact, task.spec, 20, 15, 4) == 1.0);

    ElmanRnn silent = exact;
    silent.w_r.setZero(); // outputs exactly zero; sign(0) counts as wrong
    CHECK(accuracy(silent, task.spec, 20, 15, 4) == 0.0);
}

TEST_CASE("accuracy: untrained models sit at chance level", "[rnn]") {
    const TaskDef task = repeat_copy_task(4, 4);
    Rng rng(23);
    const ElmanRnn model = init_model(32, 4, InitScheme::Uniform, false, rng);
    const double acc = accuracy(model, task.spec, 1000, 12, 31);
    CHECK(acc > 0.45);
    CHECK(acc < 0.55);
}

TEST_CASE("accuracy: rejects non-binary tasks", "[rnn]") {
    const TaskDef task = fibonacci_task(2, 1);
    Rng rng(2);
    const ElmanRnn model = init_model(8, 1, InitScheme::Uniform, false, rng);
    CHECK_THROWS_AS(accuracy(model, task.spec, 10, 10, 0), std::invalid_argument);
}
