#include "hjb/oracle_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hjb/parallel.hpp"

namespace hjb {

using Eigen::VectorXd;

OracleEstimate cole_hopf_value(const SocProblem& problem, double s, const Eigen::VectorXd& z,
                               long n_samples, const rng::StreamKey& key) {
    if (!problem.benchmark_family)
        throw std::invalid_argument("cole_hopf_value: oracle requires the benchmark family "
                                    "(f = 2u, L = |u|^2, constant scalar sigma)");
    if (s > problem.T) throw std::invalid_argument("cole_hopf_value: s must be <= T");
    if (n_samples < 1) throw std::invalid_argument("cole_hopf_value: need at least one sample");

    if (s == problem.T) return {problem.terminal_cost(z), 0.0, n_samples};

    const double sigma2 = problem.sigma_scalar * problem.sigma_scalar;
    const double alpha = 2.0 / sigma2;
    const double spread = problem.sigma_scalar * std::sqrt(problem.T - s);
    const int d = problem.d;

    // log-sum-exp over e_i = -alpha G(z + spread xi_i); the terminal scale can
    // push exp(e_i) far outside double range otherwise.
    std::vector<double> e(static_cast<std::size_t>(n_samples));
    double emax = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < n_samples; ++i) {
        const VectorXd xi =
            rng::gaussian_vector(key.with(key.a, key.b, static_cast<std::uint32_t>(i)), d);
        e[static_cast<std::size_t>(i)] = -alpha * problem.terminal_cost(z + spread * xi);
        emax = std::max(emax, e[static_cast<std::size_t>(i)]);
    }
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double ei : e) {
        const double x = std::exp(ei - emax);
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / n_samples;
    const double var = n_samples > 1 ? (sum_sq - n_samples * mean * mean) / (n_samples - 1) : 0.0;
    const double stderr_mean = std::sqrt(std::max(var, 0.0) / n_samples);

    OracleEstimate est;
    est.value = -(sigma2 / 2.0) * (emax + std::log(mean));
    est.stderr_ = (sigma2 / 2.0) * stderr_mean / mean;
    est.n_samples = n_samples;
    return est;
}

ErrorReport relative_errors(const ValueModel& model, const SocProblem& problem,
                            const TimeGrid& grid, int n_traj, std::uint64_t seed,
                            std::uint32_t eval_epoch, long oracle_samples, int workers) {
    if (n_traj < 1) throw std::invalid_argument("relative_errors: n_traj must be >= 1");
    const rng::StreamKey init_key{seed, rng::Stream::EvalInit, eval_epoch};
    const rng::StreamKey noise_key{seed, rng::Stream::EvalPath, eval_epoch};
    const TrajectoryBatch batch = rollout(model, problem, grid, n_traj,
                                          DriftPolicy::PmpFeedback, init_key, noise_key, workers);

    const int N = grid.steps;
    const long points = static_cast<long>(n_traj) * (N + 1);
    std::vector<double> model_vals(static_cast<std::size_t>(points));
    std::vector<double> oracle_vals(static_cast<std::size_t>(points));
    std::vector<double> oracle_errs(static_cast<std::size_t>(points));

    parallel_for(n_traj, workers, [&](int j) {
        for (int i = 0; i <= N; ++i) {
            const double s = grid.time_at(i);
            const VectorXd z = batch.Z[j].col(i);
            const std::size_t idx = static_cast<std::size_t>(j) * (N + 1) + i;
            model_vals[idx] = eval_value(model, {s, z});
            const rng::StreamKey okey{seed, rng::Stream::Oracle,
                                      eval_epoch * 4096u + static_cast<std::uint32_t>(j),
                                      static_cast<std::uint32_t>(i)};
            const OracleEstimate est = cole_hopf_value(problem, s, z, oracle_samples, okey);
            oracle_vals[idx] = est.value;
            oracle_errs[idx] = est.stderr_;
        }
    });

    ErrorReport report;
    report.trajectories = n_traj;
    report.points = points;
    double num = 0.0;
    double den = 0.0;
    double err_sq = 0.0;
    for (long i = 0; i < points; ++i) {
        const double diff = model_vals[static_cast<std::size_t>(i)] -
                            oracle_vals[static_cast<std::size_t>(i)];
        num += diff * diff;
        den += oracle_vals[static_cast<std::size_t>(i)] *
               oracle_vals[static_cast<std::size_t>(i)];
        err_sq += oracle_errs[static_cast<std::size_t>(i)] *
                  oracle_errs[static_cast<std::size_t>(i)];
    }
    report.re = std::sqrt(num) / std::sqrt(den);
    report.oracle_value_l2 = std::sqrt(den);
    report.oracle_stderr_l2 = std::sqrt(err_sq);

    double per_traj = 0.0;
    for (int j = 0; j < n_traj; ++j) {
        double tn = 0.0;
        double td = 0.0;
        for (int i = 0; i <= N; ++i) {
            const std::size_t idx = static_cast<std::size_t>(j) * (N + 1) + i;
            const double diff = model_vals[idx] - oracle_vals[idx];
            tn += diff * diff;
            td += oracle_vals[idx] * oracle_vals[idx];
        }
        per_traj += std::sqrt(tn) / std::sqrt(td);
    }
    report.re_per_traj_mean = per_traj / n_traj;

    report.oracle_value0 = oracle_vals[0];
    report.oracle_stderr0 = oracle_errs[0];
    report.re0 = std::abs(model_vals[0] - oracle_vals[0]) / std::abs(oracle_vals[0]);
    return report;
}

std::pair<double, double> evaluate_policy_objective(const ValueModel& model,
                                                    const SocProblem& problem,
                                                    const TimeGrid& grid, int n_rollouts,
                                                    std::uint64_t seed,
                                                    std::uint32_t eval_epoch, int workers) {
    if (n_rollouts < 1)
        throw std::invalid_argument("evaluate_policy_objective: n_rollouts must be >= 1");
    const rng::StreamKey init_key{seed, rng::Stream::EvalInit, eval_epoch};
    const rng::StreamKey noise_key{seed, rng::Stream::EvalPath, eval_epoch};
    const TrajectoryBatch batch = rollout(model, problem, grid, n_rollouts,
                                          DriftPolicy::PmpFeedback, init_key, noise_key, workers);
    const int N = grid.steps;
    const double ds = grid.ds();
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int j = 0; j < n_rollouts; ++j) {
        double cost = problem.terminal_cost(batch.Z[j].col(N));
        for (int i = 1; i <= N; ++i)
            cost += ds * problem.running_cost(grid.time_at(i), batch.Z[j].col(i),
                                              batch.U[j].col(i - 1));
        sum += cost;
        sum_sq += cost * cost;
    }
    const double mean = sum / n_rollouts;
    const double var =
        n_rollouts > 1 ? (sum_sq - n_rollouts * mean * mean) / (n_rollouts - 1) : 0.0;
    return {mean, std::sqrt(std::max(var, 0.0) / n_rollouts)};
}

}  // namespace hjb
