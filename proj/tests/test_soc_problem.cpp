#include <doctest.h>

#include <cmath>

#include "hjb/soc_problem.hpp"
#include "test_util.hpp"

using namespace hjb;
using testutil::rel_err;

namespace {

// Generalized Hamiltonian at a concrete control, for the maximality oracle.
double hamiltonian_at(const SocProblem& p, double s, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& padj, const Eigen::VectorXd& u) {
    // The trace term does not depend on u, so it is omitted when ranking controls.
    return padj.dot(p.drift(s, z, u)) - p.running_cost(s, z, u);
}

}  // namespace

TEST_CASE("feedback_control: closed forms of both instances") {
    const SocProblem bench = make_benchmark_original(5);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(5);
    p[0] = 1.0;
    CHECK(feedback_control(bench, 0.2, Eigen::VectorXd::Zero(5), p) == p);

    const SocProblem traj = make_trajectory2d();
    CHECK(feedback_control(traj, 0.0, Eigen::Vector2d(1.0, -1.0), Eigen::Vector2d::Zero())
              .norm() == 0.0);
}

TEST_CASE("feedback_control: maximizes the Hamiltonian against random controls") {
    const SocProblem problems[] = {make_benchmark_original(4), make_trajectory2d()};
    for (const auto& p : problems) {
        for (int trial = 0; trial < 100; ++trial) {
            const auto key = rng::StreamKey{55, rng::Stream::Generic,
                                            static_cast<std::uint32_t>(trial)};
            const Eigen::VectorXd z = rng::gaussian_vector(key.with(key.a, 0), p.d, 1.0);
            const Eigen::VectorXd padj = rng::gaussian_vector(key.with(key.a, 1), p.d, 1.0);
            const double s = 0.5;
            const Eigen::VectorXd u_star = feedback_control(p, s, z, padj);
            const double h_star = hamiltonian_at(p, s, z, padj, u_star);
            for (int r = 0; r < 10; ++r) {
                const Eigen::VectorXd u_rand = rng::gaussian_vector(
                    key.with(key.a, 2 + static_cast<std::uint32_t>(r)), p.k, 2.0);
                CHECK(h_star >= hamiltonian_at(p, s, z, padj, u_rand) - 1e-12);
            }
        }
    }
}

TEST_CASE("hamiltonian_residual: benchmark reduces to -q/2 + |g|^2") {
    const SocProblem p = make_benchmark_original(3);
    const Eigen::VectorXd g = Eigen::Vector3d(0.4, -1.1, 2.0);
    const double q = 0.77;
    const double got = hamiltonian_residual(p, 0.3, Eigen::Vector3d(1.0, 0.0, -1.0), g, q);
    CHECK(got == doctest::Approx(-q / 2.0 + g.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("hamiltonian_residual: 2D instance reduces to -q/2 + |g|^2/2 - Q(z)") {
    const SocProblem p = make_trajectory2d();
    const Eigen::Vector2d z(0.3, -0.2);
    const Eigen::VectorXd g = Eigen::Vector2d(1.2, 0.5);
    const double q = -0.4;
    const double got = hamiltonian_residual(p, 0.1, z, g, q);
    CHECK(got ==
          doctest::Approx(-q / 2.0 + 0.5 * g.squaredNorm() - obstacle_cost(z)).epsilon(1e-14));
}

TEST_CASE("hamiltonian_residual: all-zero inputs give zero") {
    const SocProblem p = make_benchmark_original(2);
    CHECK(hamiltonian_residual(p, 0.0, Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), 0.0) ==
          0.0);
}

TEST_CASE("hamiltonian_residual: agrees with the raw tr(sigma M) form for quadratic Phi") {
    // Phi(z) = 1/2 z'Hq z + b0'z gives grad = Hq z + b0 and Hess = Hq.
    const SocProblem problems[] = {make_benchmark_original(3), make_trajectory2d()};
    for (const auto& p : problems) {
        const int d = p.d;
        for (int trial = 0; trial < 20; ++trial) {
            const auto key =
                rng::StreamKey{66, rng::Stream::Generic, static_cast<std::uint32_t>(trial)};
            Eigen::MatrixXd R(d, d);
            for (int r = 0; r < d; ++r)
                R.row(r) = rng::gaussian_vector(key.with(key.a, static_cast<std::uint32_t>(r)),
                                                d, 1.0);
            const Eigen::MatrixXd Hq = 0.5 * (R + R.transpose());
            const Eigen::VectorXd b0 = rng::gaussian_vector(key.with(key.a, 100), d, 1.0);
            const Eigen::VectorXd z = rng::gaussian_vector(key.with(key.a, 101), d, 1.0);
            const double s = 0.4;

            const Eigen::VectorXd grad = Hq * z + b0;
            const double sigma = p.sigma_scalar;
            const double q = sigma * sigma * Hq.trace();

            const Eigen::VectorXd padj = -grad;
            const Eigen::VectorXd u = feedback_control(p, s, z, padj);
            const Eigen::MatrixXd M = -sigma * Hq;  // -sigma' Hess with scalar sigma
            const double direct = 0.5 * (sigma * M).trace() + padj.dot(p.drift(s, z, u)) -
                                  p.running_cost(s, z, u);
            CHECK(rel_err(hamiltonian_residual(p, s, z, grad, q), direct, 1e-12) < 1e-10);
        }
    }
}

TEST_CASE("terminal_grad matches finite differences of G for both instances") {
    const SocProblem problems[] = {make_benchmark_original(4), make_benchmark_shifted(4),
                                   make_trajectory2d()};
    const double h = 1e-6;
    for (const auto& p : problems) {
        for (int trial = 0; trial < 100; ++trial) {
            const Eigen::VectorXd z = rng::gaussian_vector(
                {77, rng::Stream::Generic, static_cast<std::uint32_t>(trial)}, p.d, 1.5);
            const Eigen::VectorXd g = p.terminal_grad(z);
            for (int j = 0; j < p.d; ++j) {
                Eigen::VectorXd up = z, down = z;
                up[j] += h;
                down[j] -= h;
                const double fd = (p.terminal_cost(up) - p.terminal_cost(down)) / (2 * h);
                CHECK(rel_err(g[j], fd, 1e-6) < 1e-6);
            }
        }
    }
}

TEST_CASE("substituting the feedback reproduces the written forward SDE drifts") {
    const Eigen::VectorXd g = Eigen::Vector3d(0.7, -0.3, 1.1);
    const SocProblem bench = make_benchmark_original(3);
    const Eigen::VectorXd u_b = feedback_control(bench, 0.1, Eigen::Vector3d::Zero(), -g);
    CHECK((bench.drift(0.1, Eigen::Vector3d::Zero(), u_b) + 2.0 * g).norm() == 0.0);

    const SocProblem traj = make_trajectory2d();
    const Eigen::Vector2d g2(0.7, -0.3);
    const Eigen::VectorXd u_t = feedback_control(traj, 0.1, Eigen::Vector2d::Zero(), -g2);
    CHECK((traj.drift(0.1, Eigen::Vector2d::Zero(), u_t) + g2).norm() == 0.0);
}

TEST_CASE("sample_initial: benchmark draws are exactly the origin") {
    const SocProblem p = make_benchmark_original(6);
    const auto draws = sample_initial(p, {1, rng::Stream::TrainInit}, 5);
    CHECK(draws.size() == 5);
    for (const auto& z : draws) CHECK(z.norm() == 0.0);
}

TEST_CASE("sample_initial: 2D Gaussian mean approaches (-1.5, -1.5)") {
    const SocProblem p = make_trajectory2d();
    const int n = 100000;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i)
        mean += sample_initial_one(p, {2, rng::Stream::TrainInit},
                                   static_cast<std::uint32_t>(i));
    mean /= n;
    CHECK(std::abs(mean[0] + 1.5) < 0.02);
    CHECK(std::abs(mean[1] + 1.5) < 0.02);
}

TEST_CASE("sample_initial: n = 1 returns a single d-vector") {
    const SocProblem p = make_trajectory2d();
    const auto draws = sample_initial(p, {3, rng::Stream::TrainInit}, 1);
    CHECK(draws.size() == 1);
    CHECK(draws[0].size() == 2);
}

TEST_CASE("obstacle_cost: hand values") {
    CHECK(obstacle_cost(Eigen::Vector2d::Zero()) == 50.0);
    CHECK(obstacle_cost(Eigen::Vector2d(40.0, 40.0)) < 1e-12);
    const Eigen::Vector2d edge(std::sqrt(0.8), 0.0);
    CHECK(obstacle_cost(edge) == doctest::Approx(50.0 / std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("taped problem callbacks match their plain counterparts") {
    const SocProblem problems[] = {make_benchmark_shifted(3), make_trajectory2d()};
    for (const auto& p : problems) {
        const Eigen::VectorXd z = rng::gaussian_vector({88, rng::Stream::Generic}, p.d, 1.0);
        const Eigen::VectorXd u = rng::gaussian_vector({89, rng::Stream::Generic}, p.k, 1.0);
        const Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
        ad::Tape tape(theta);
        const ad::NodeId zn = tape.constant(z);
        const ad::NodeId un = tape.constant(u);
        CHECK(tape.value(p.drift_t(tape, 0.2, zn, un)) == p.drift(0.2, z, u));
        CHECK(tape.scalar(p.running_cost_t(tape, 0.2, zn, un)) ==
              doctest::Approx(p.running_cost(0.2, z, u)).epsilon(1e-14));
        CHECK(tape.scalar(p.terminal_cost_t(tape, zn)) ==
              doctest::Approx(p.terminal_cost(z)).epsilon(1e-14));
        CHECK((tape.value(p.terminal_grad_t(tape, zn)) - p.terminal_grad(z)).norm() <
              1e-13 * (1.0 + p.terminal_grad(z).norm()));
        CHECK(tape.value(p.feedback_t(tape, 0.2, zn, un)) == p.feedback(0.2, z, u));
    }
}

TEST_CASE("make_problem_by_name covers the three instances and rejects junk") {
    CHECK(make_problem_by_name("trajectory2d", 2).d == 2);
    CHECK(make_problem_by_name("benchmark", 7).sigma_scalar ==
          doctest::Approx(std::sqrt(2.0)));
    const SocProblem shifted = make_problem_by_name("benchmark_shifted", 4);
    CHECK(shifted.terminal_scale == 1000.0);
    CHECK(shifted.target == Eigen::VectorXd::Constant(4, 3.0));
    CHECK(shifted.sigma_scalar == doctest::Approx(2.0 * std::sqrt(2.0) / 5.0));
    CHECK_THROWS_AS(make_problem_by_name("nope", 2), std::invalid_argument);
}
