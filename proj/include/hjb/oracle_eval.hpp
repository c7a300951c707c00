#pragma once

#include "hjb/sampler.hpp"

namespace hjb {

struct OracleEstimate {
    double value = 0.0;
    double stderr_ = 0.0;  // Monte-Carlo standard error of the outer estimate
    long n_samples = 0;
};

struct ErrorReport {
    double re = 0.0;   // pooled discrete l2 relative error over all points
    double re0 = 0.0;  // relative error at (t0, z(0))
    double re_per_traj_mean = 0.0;  // per-trajectory-averaged alternative, logged alongside
    int trajectories = 0;
    long points = 0;
    // Oracle noise bookkeeping so callers can widen tolerances by MC error.
    double oracle_value_l2 = 0.0;
    double oracle_stderr_l2 = 0.0;
    double oracle_value0 = 0.0;
    double oracle_stderr0 = 0.0;
};

// Cole-Hopf / Feynman-Kac value of the benchmark family at (s, z):
//   Phi(s, z) = -(sigma^2/2) ln E[ exp(-(2/sigma^2) G(z + sigma sqrt(T-s) xi)) ]
// with xi ~ N(0, I). Computed in log-sum-exp form; the standard error comes
// from the delta method. Samples are keyed (key.a, key.b, sample index).
OracleEstimate cole_hopf_value(const SocProblem& problem, double s, const Eigen::VectorXd& z,
                               long n_samples, const rng::StreamKey& key);

// RE / RE0 of the model against the oracle along n_traj feedback rollouts.
ErrorReport relative_errors(const ValueModel& model, const SocProblem& problem,
                            const TimeGrid& grid, int n_traj, std::uint64_t seed,
                            std::uint32_t eval_epoch, long oracle_samples, int workers = 0);

// Control objective of the frozen model over feedback rollouts.
std::pair<double, double> evaluate_policy_objective(const ValueModel& model,
                                                    const SocProblem& problem,
                                                    const TimeGrid& grid, int n_rollouts,
                                                    std::uint64_t seed,
                                                    std::uint32_t eval_epoch, int workers = 0);

}  // namespace hjb
