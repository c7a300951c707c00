#include <doctest.h>

#include <cmath>

#include "gauss_hermite.hpp"
#include "hjb/loss.hpp"
#include "test_util.hpp"

using namespace hjb;
using testutil::fd_theta_gradient;
using testutil::max_rel_err;
using testutil::random_model;
using testutil::rel_err;

namespace {

const rng::StreamKey kInit{20, rng::Stream::TrainInit, 0};
const rng::StreamKey kNoise{20, rng::Stream::TrainPath, 0};
const HessianStrategy kExact = HessianStrategy::exact();

ValueModel constant_model(int d, double c) {
    Architecture a;
    a.kind = BodyKind::Mlp;
    a.width = 2;
    a.depth = 0;
    ValueModel model = ValueModel::init(a, d, 1);
    model.theta[model.layout.head_c.offset] = c;
    return model;
}

// Mean taped trajectory-loss over a small frozen-noise batch; used as the
// finite-difference functional for gradient checks.
double taped_batch_loss(const ValueModel& model, const SocProblem& problem,
                        const TimeGrid& grid, const LossWeights& weights, DriftPolicy policy,
                        bool through_dynamics, int n) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        RecordingContext ctx(model);
        const Eigen::VectorXd z0 =
            sample_initial_one(problem, kInit, static_cast<std::uint32_t>(j));
        const HessianStrategy strategy = default_hessian_strategy(
            problem.d, rng::StreamKey{kNoise.seed, rng::Stream::Hutchinson, 0});
        const auto nodes =
            record_trajectory_loss(ctx, problem, grid, weights, policy, z0, kNoise,
                                   static_cast<std::uint32_t>(j), through_dynamics, strategy);
        acc += ctx.tape().scalar(nodes.total);
    }
    return acc / n;
}

Eigen::VectorXd taped_batch_gradient(const ValueModel& model, const SocProblem& problem,
                                     const TimeGrid& grid, const LossWeights& weights,
                                     DriftPolicy policy, bool through_dynamics, int n) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.theta.size());
    for (int j = 0; j < n; ++j) {
        RecordingContext ctx(model);
        const Eigen::VectorXd z0 =
            sample_initial_one(problem, kInit, static_cast<std::uint32_t>(j));
        const HessianStrategy strategy = default_hessian_strategy(
            problem.d, rng::StreamKey{kNoise.seed, rng::Stream::Hutchinson, 0});
        const auto nodes =
            record_trajectory_loss(ctx, problem, grid, weights, policy, z0, kNoise,
                                   static_cast<std::uint32_t>(j), through_dynamics, strategy);
        grad += ctx.gradient(nodes.total);
    }
    return grad / n;
}

}  // namespace

TEST_CASE("p_bsde: constant model with zero running cost telescopes to zero") {
    // On the benchmark a constant Phi gives zero feedback controls, so L = 0.
    const SocProblem p = make_benchmark_original(3);
    const ValueModel model = constant_model(3, 4.2);
    const TrajectoryBatch batch =
        rollout(model, p, {0.0, 1.0, 8}, 4, DriftPolicy::PmpFeedback, kInit, kNoise);
    CHECK(p_bsde(batch, model, p, 2) == 0.0);
}

TEST_CASE("p_bsde and exponent handling on a hand-built single step") {
    // Phi(s, z) = z, so Phi_0 = z_0 = 1, Phi_1 = z_1 = 2, grad = 1.
    Architecture a;
    a.kind = BodyKind::Mlp;
    a.width = 2;
    a.depth = 0;
    a.quad_rank = 1;
    ValueModel model = ValueModel::init(a, 1, 1);
    model.theta[model.layout.head_b.offset + 1] = 1.0;

    SocProblem p;  // synthetic problem: L = 0.5, sigma = 0.5, f unused
    p.name = "hand";
    p.d = p.k = 1;
    p.T = 1.0;
    p.diffusion = [](double, const Eigen::VectorXd&) { return DiffusionEval{0.5, {}}; };
    p.running_cost = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return 0.5; };
    p.drift = [](double, const Eigen::VectorXd&, const Eigen::VectorXd& u) { return u; };
    p.terminal_cost = [](const Eigen::VectorXd&) { return 0.0; };
    p.terminal_grad = [](const Eigen::VectorXd& z) { return Eigen::VectorXd::Zero(z.size()); };
    p.feedback = [](double, const Eigen::VectorXd&, const Eigen::VectorXd& padj) {
        return padj;
    };

    TrajectoryBatch batch;
    batch.grid = {0.0, 1.0, 1};
    batch.Z.push_back((Eigen::MatrixXd(1, 2) << 1.0, 2.0).finished());
    batch.U.push_back((Eigen::MatrixXd(1, 1) << 0.0).finished());
    batch.dW.push_back((Eigen::MatrixXd(1, 1) << 0.5).finished());  // grad*sigma*dW = 0.25

    // residual = (2 - 1) + 0.5 - 0.25 = 1.25
    CHECK(p_bsde(batch, model, p, 2) == doctest::Approx(1.5625).epsilon(1e-14));
    CHECK(p_bsde(batch, model, p, 1) == doctest::Approx(1.25).epsilon(1e-14));
}

TEST_CASE("p_bsde: exact benchmark solution satisfies the BSDE as N grows") {
    // Plug the quadrature-evaluated exact Phi of the d = 1 benchmark into the
    // BSDE residual along feedback paths; the penalty must fall as N doubles.
    const double sigma = std::sqrt(2.0);
    const double T = 1.0;
    auto phi = [&](double s, double z) {
        return testutil::cole_hopf_quadrature_1d(sigma, 1.0, 0.0, T, s, z, 96);
    };
    auto grad_phi = [&](double s, double z) {
        const double h = 1e-5;
        return (phi(s, z + h) - phi(s, z - h)) / (2.0 * h);
    };

    const int n_traj = 100;
    std::vector<double> penalties;
    for (int N : {10, 20, 40, 80, 160}) {
        const double ds = T / N;
        double acc = 0.0;
        for (int j = 0; j < n_traj; ++j) {
            double z = 0.0;
            double traj_sum = 0.0;
            double phi_cur = phi(0.0, z);
            for (int i = 0; i < N; ++i) {
                const double s = i * ds;
                const double g = grad_phi(s, z);
                const double dw = brownian_increments(kNoise.with(static_cast<std::uint32_t>(N),
                                                                  static_cast<std::uint32_t>(j)),
                                                      j, static_cast<std::uint32_t>(i), 1,
                                                      ds)[0];
                const double z_next = z - 2.0 * g * ds + sigma * dw;
                const double phi_next = phi(s + ds, z_next);
                const double resid = phi_next - phi_cur + g * g * ds - g * sigma * dw;
                traj_sum += resid * resid;
                z = z_next;
                phi_cur = phi_next;
            }
            acc += traj_sum;
        }
        penalties.push_back(acc / n_traj);
    }
    for (std::size_t k = 1; k < penalties.size(); ++k)
        CHECK(penalties[k] < penalties[k - 1] * 1.05);
    CHECK(penalties.back() < penalties.front() / 3.0);
}

TEST_CASE("p_hjb: zero model on the benchmark vanishes") {
    const SocProblem p = make_benchmark_original(2);
    const ValueModel model = constant_model(2, 0.0);
    const TrajectoryBatch batch =
        rollout(model, p, {0.0, 1.0, 5}, 3, DriftPolicy::ZeroDrift, kInit, kNoise);
    CHECK(p_hjb(batch, model, p, 2, kExact) == 0.0);
}

TEST_CASE("p_hjb: quadratic model matches the symbolic 2D residual") {
    // For Phi = 1/2 y'A'A y + b'y + c the HJB residual of the 2D problem is
    // d_s Phi + (1/8) Lap Phi - 1/2 |grad Phi|^2 + Q, all in closed form.
    const SocProblem p = make_trajectory2d();
    Architecture a;
    a.kind = BodyKind::Mlp;
    a.width = 2;
    a.depth = 0;
    a.quad_rank = 3;
    ValueModel model = ValueModel::init(a, 2, 3);
    const auto& segA = model.layout.A;
    model.theta.segment(segA.offset, segA.size()) =
        rng::gaussian_vector({91, rng::Stream::Generic}, segA.size(), 0.6);
    model.theta.segment(model.layout.head_b.offset, 3) << 0.2, -0.4, 0.9;

    Eigen::MatrixXd A(segA.rows, segA.cols);
    for (int r = 0; r < segA.rows; ++r)
        for (int c = 0; c < segA.cols; ++c) A(r, c) = model.theta[segA.offset + r * segA.cols + c];
    const Eigen::MatrixXd H = A.transpose() * A;
    const Eigen::Vector3d b(0.2, -0.4, 0.9);

    const TimeGrid grid{0.0, 1.0, 4};
    const TrajectoryBatch batch = rollout(model, p, grid, 2, DriftPolicy::ZeroDrift, kInit,
                                          kNoise);
    double expected = 0.0;
    for (int j = 0; j < batch.size(); ++j) {
        double traj = 0.0;
        for (int i = 1; i <= grid.steps; ++i) {
            Eigen::Vector3d y;
            y << grid.time_at(i), batch.Z[j].col(i);
            const Eigen::Vector3d grad_y = H * y + b;
            const double lap = H(1, 1) + H(2, 2);
            const double r = grad_y[0] + lap / 8.0 -
                             0.5 * grad_y.tail(2).squaredNorm() +
                             obstacle_cost(batch.Z[j].col(i));
            traj += r * r;
        }
        expected += grid.ds() * traj;
    }
    expected /= batch.size();
    CHECK(rel_err(p_hjb(batch, model, p, 2, kExact), expected, 1e-12) < 1e-10);
}

TEST_CASE("objective_j: zero controls reduce to the terminal cost") {
    const SocProblem p = make_benchmark_original(3);
    const ValueModel model = constant_model(3, 1.0);  // constant => u = 0
    const TrajectoryBatch batch =
        rollout(model, p, {0.0, 1.0, 6}, 5, DriftPolicy::PmpFeedback, kInit, kNoise);
    double g_mean = 0.0;
    for (int j = 0; j < batch.size(); ++j) g_mean += p.terminal_cost(batch.Z[j].col(6));
    g_mean /= batch.size();
    CHECK(objective_j(batch, p) == doctest::Approx(g_mean).epsilon(1e-14));
}

TEST_CASE("objective_j: pinned 2D trajectory gives 275") {
    const SocProblem p = make_trajectory2d();
    const int N = 10;
    TrajectoryBatch batch;
    batch.grid = {0.0, 1.0, N};
    batch.Z.push_back(Eigen::MatrixXd::Zero(2, N + 1));
    batch.U.push_back(Eigen::MatrixXd::Zero(2, N));
    batch.dW.push_back(Eigen::MatrixXd::Zero(2, N));
    // G(0) + ds * N * Q(0) = 50 * |(1.5,1.5)|^2 + 50 = 225 + 50
    CHECK(objective_j(batch, p) == doctest::Approx(275.0).epsilon(1e-14));
}

TEST_CASE("objective_j: translation invariance of the benchmark costs") {
    const int d = 3;
    const SocProblem base = make_benchmark_original(d);
    const ValueModel model = random_model(BodyKind::Mlp, d, 5, 1, Act::Sin, true, 7);
    TrajectoryBatch batch =
        rollout(model, base, {0.0, 1.0, 5}, 4, DriftPolicy::PmpFeedback, kInit, kNoise);
    const double j0 = objective_j(batch, base);

    const Eigen::VectorXd shift = Eigen::VectorXd::Constant(d, 0.8);
    const SocProblem shifted = make_benchmark(d, std::sqrt(2.0), 1.0, shift, 1.0);
    for (auto& Z : batch.Z) Z.colwise() += shift;
    CHECK(objective_j(batch, shifted) == doctest::Approx(j0).epsilon(1e-12));
}

TEST_CASE("terminal_penalties: constant zero model at the origin and homogeneity") {
    const SocProblem p = make_benchmark(3, 0.0, 1.0, Eigen::VectorXd::Zero(3), 1.0);
    const ValueModel zero = constant_model(3, 0.0);
    const TrajectoryBatch batch =
        rollout(zero, p, {0.0, 1.0, 4}, 2, DriftPolicy::PmpFeedback, kInit, kNoise);
    const auto [val, grad] = terminal_penalties(batch, zero, p);
    CHECK(val == doctest::Approx(std::log(2.0)).epsilon(1e-14));  // |ln(1/2)|
    CHECK(grad == 0.0);

    // doubling the gradient error doubles the norm-based term
    Architecture a;
    a.kind = BodyKind::Mlp;
    a.width = 2;
    a.depth = 0;
    ValueModel lin = ValueModel::init(a, 3, 1);
    lin.theta.segment(lin.layout.head_b.offset + 1, 3) << 0.3, -0.2, 0.5;
    const auto [v1, g1] = terminal_penalties(batch, lin, p);
    lin.theta.segment(lin.layout.head_b.offset + 1, 3) *= 2.0;
    const auto [v2, g2] = terminal_penalties(batch, lin, p);
    (void)v1;
    (void)v2;
    CHECK(g2 == doctest::Approx(2.0 * g1).epsilon(1e-12));
}

TEST_CASE("total_loss: weighting identity and skipped terms") {
    const SocProblem p = make_trajectory2d();
    const ValueModel model = random_model(BodyKind::ResNet, 2, 6, 1, Act::LogCosh, true, 5);
    const TrajectoryBatch batch =
        rollout(model, p, {0.0, 1.0, 6}, 3, DriftPolicy::PmpFeedback, kInit, kNoise);

    LossWeights w;
    w.beta = {1.0, 1.0, 1.0, 0.1, 0.1};
    const LossBreakdown full = total_loss(w, batch, model, p, kExact);
    CHECK(full.total == doctest::Approx(full.bsde + full.hjb + full.obj + 0.1 * full.term_val +
                                        0.1 * full.term_grad)
                            .epsilon(1e-12));
    CHECK(full.bsde == doctest::Approx(p_bsde(batch, model, p, 2)).epsilon(1e-12));

    LossWeights skip;
    skip.beta = {1.0, 0.0, 20.0, 1.0, 1.0};
    const LossBreakdown no_hjb = total_loss(skip, batch, model, p, kExact);
    CHECK(no_hjb.hjb == 0.0);

    LossWeights zero;
    zero.beta = {0.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(total_loss(zero, batch, model, p, kExact).total == 0.0);
}

TEST_CASE("all-zero weights give a zero parameter gradient") {
    const SocProblem p = make_trajectory2d();
    const ValueModel model = random_model(BodyKind::ResNet, 2, 5, 1, Act::LogCosh, true, 9);
    LossWeights w;
    w.beta = {0.0, 0.0, 0.0, 0.0, 0.0};
    const Eigen::VectorXd grad =
        taped_batch_gradient(model, p, {0.0, 1.0, 3}, w, DriftPolicy::PmpFeedback, true, 2);
    CHECK(grad.norm() == 0.0);
}

TEST_CASE("taped per-term values agree with the plain batch means") {
    // frozen-state recording over the same keys must reproduce the plain loss
    const SocProblem p = make_trajectory2d();
    const ValueModel model = random_model(BodyKind::ResNet, 2, 6, 1, Act::LogCosh, true, 11);
    const TimeGrid grid{0.0, 1.0, 5};
    const int n = 3;
    const TrajectoryBatch batch = rollout(model, p, grid, n, DriftPolicy::PmpFeedback, kInit,
                                          kNoise);
    LossWeights w;
    w.beta = {1.0, 1.0, 1.0, 0.1, 0.1};
    const LossBreakdown plain = total_loss(w, batch, model, p, kExact);

    LossBreakdown taped;
    for (int j = 0; j < n; ++j) {
        RecordingContext ctx(model);
        const auto nodes = record_trajectory_loss(
            ctx, p, grid, w, DriftPolicy::PmpFeedback,
            sample_initial_one(p, kInit, static_cast<std::uint32_t>(j)), kNoise,
            static_cast<std::uint32_t>(j), false, kExact);
        taped.bsde += ctx.tape().scalar(nodes.bsde);
        taped.hjb += ctx.tape().scalar(nodes.hjb);
        taped.obj += ctx.tape().scalar(nodes.obj);
        taped.term_val += ctx.tape().scalar(nodes.term_val);
        taped.term_grad += ctx.tape().scalar(nodes.term_grad);
    }
    CHECK(taped.bsde / n == doctest::Approx(plain.bsde).epsilon(1e-12));
    CHECK(taped.hjb / n == doctest::Approx(plain.hjb).epsilon(1e-12));
    CHECK(taped.obj / n == doctest::Approx(plain.obj).epsilon(1e-12));
    CHECK(taped.term_val / n == doctest::Approx(plain.term_val).epsilon(1e-12));
    CHECK(taped.term_grad / n == doctest::Approx(plain.term_grad).epsilon(1e-12));
}

TEST_CASE("gradients of every individual loss term pass finite differences") {
    // 2-step, 2-trajectory batches on d = 2, both backprop modes. Under
    // frozen_states the finite-difference functional must pin the visited
    // states (that is what the mode differentiates); under through_dynamics
    // it re-rolls the trajectory on the frozen noise.
    const SocProblem p = make_trajectory2d();
    const TimeGrid grid{0.0, 1.0, 2};
    for (bool through : {true, false}) {
        for (int term = 0; term < 5; ++term) {
            ValueModel model = random_model(BodyKind::ResNet, 2, 5, 1, Act::LogCosh, true,
                                            200 + term);
            LossWeights w;
            w.beta = {0.0, 0.0, 0.0, 0.0, 0.0};
            w.beta[static_cast<std::size_t>(term)] = 1.0;

            Eigen::VectorXd grad, fd;
            if (through) {
                grad = taped_batch_gradient(model, p, grid, w, DriftPolicy::PmpFeedback, true,
                                            2);
                fd = fd_theta_gradient(model, [&] {
                    return taped_batch_loss(model, p, grid, w, DriftPolicy::PmpFeedback, true,
                                            2);
                });
            } else {
                const TrajectoryBatch batch =
                    rollout(model, p, grid, 2, DriftPolicy::PmpFeedback, kInit, kNoise);
                auto pinned_loss = [&] {
                    double acc = 0.0;
                    for (int j = 0; j < batch.size(); ++j) {
                        RecordingContext ctx(model);
                        const auto path = record_states_as_constants(
                            ctx, p, grid, batch.Z[j], batch.dW[j], &kExact,
                            static_cast<std::uint32_t>(j));
                        acc += ctx.tape().scalar(record_loss_terms(ctx, p, grid, w, path).total);
                    }
                    return acc / batch.size();
                };
                grad = Eigen::VectorXd::Zero(model.theta.size());
                for (int j = 0; j < batch.size(); ++j) {
                    RecordingContext ctx(model);
                    const auto path = record_states_as_constants(
                        ctx, p, grid, batch.Z[j], batch.dW[j], &kExact,
                        static_cast<std::uint32_t>(j));
                    grad += ctx.gradient(record_loss_terms(ctx, p, grid, w, path).total);
                }
                grad /= batch.size();
                fd = fd_theta_gradient(model, pinned_loss);
            }
            CHECK(max_rel_err(grad, fd, 1e-5) < 1e-4);
        }
    }
}

TEST_CASE("objective-only gradient is the pathwise policy gradient") {
    // beta_3 = 1 alone with backprop through the dynamics on frozen noise.
    const SocProblem p = make_benchmark_original(2);
    ValueModel model = random_model(BodyKind::Mlp, 2, 5, 1, Act::Sin, true, 301);
    LossWeights w;
    w.beta = {0.0, 0.0, 1.0, 0.0, 0.0};
    const TimeGrid grid{0.0, 1.0, 3};

    const Eigen::VectorXd grad =
        taped_batch_gradient(model, p, grid, w, DriftPolicy::PmpFeedback, true, 2);
    const Eigen::VectorXd fd = fd_theta_gradient(model, [&] {
        return taped_batch_loss(model, p, grid, w, DriftPolicy::PmpFeedback, true, 2);
    });
    CHECK(max_rel_err(grad, fd, 1e-5) < 1e-4);
}

TEST_CASE("frozen-states gradient differentiates the recomputed controls") {
    // With states pinned, the finite-difference functional re-records the
    // model evaluations (and feedback controls) at the same visited states.
    const SocProblem p = make_trajectory2d();
    const TimeGrid grid{0.0, 1.0, 3};
    ValueModel model = random_model(BodyKind::ResNet, 2, 5, 1, Act::LogCosh, true, 401);
    const TrajectoryBatch batch =
        rollout(model, p, grid, 2, DriftPolicy::PmpFeedback, kInit, kNoise);
    LossWeights w;
    w.beta = {1.0, 1.0, 1.0, 0.1, 0.1};

    auto frozen_loss = [&]() {
        double acc = 0.0;
        for (int j = 0; j < batch.size(); ++j) {
            RecordingContext ctx(model);
            const auto path = record_states_as_constants(ctx, p, grid, batch.Z[j], batch.dW[j],
                                                         &kExact, static_cast<std::uint32_t>(j));
            acc += ctx.tape().scalar(record_loss_terms(ctx, p, grid, w, path).total);
        }
        return acc / batch.size();
    };

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.theta.size());
    for (int j = 0; j < batch.size(); ++j) {
        RecordingContext ctx(model);
        const auto path = record_states_as_constants(ctx, p, grid, batch.Z[j], batch.dW[j],
                                                     &kExact, static_cast<std::uint32_t>(j));
        grad += ctx.gradient(record_loss_terms(ctx, p, grid, w, path).total);
    }
    grad /= batch.size();

    const Eigen::VectorXd fd = fd_theta_gradient(model, frozen_loss);
    CHECK(max_rel_err(grad, fd, 1e-5) < 1e-4);
}
