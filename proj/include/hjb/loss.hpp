#pragma once

#include <array>

#include "hjb/sampler.hpp"

namespace hjb {

// Penalty weights (beta_1 P_BSDE, beta_2 P_HJB, beta_3 J, beta_4 terminal
// value, beta_5 terminal gradient) and the residual exponent p.
struct LossWeights {
    std::array<double, 5> beta{1.0, 1.0, 1.0, 0.1, 0.1};
    int exponent = 2;

    void validate() const;
};

struct LossBreakdown {
    double bsde = 0.0;
    double hjb = 0.0;
    double obj = 0.0;
    double term_val = 0.0;
    double term_grad = 0.0;
    double total = 0.0;
};

// Batch means of the individual penalty terms. The trajectory sums follow the
// written index conventions: P_BSDE over i = 0..N-1, P_HJB and J over
// i = 1..N, with J pairing z_i with the stored step control u_{i-1}.
double p_bsde(const TrajectoryBatch& batch, const ValueModel& model, const SocProblem& problem,
              int exponent);
double p_hjb(const TrajectoryBatch& batch, const ValueModel& model, const SocProblem& problem,
             int exponent, const HessianStrategy& strategy);
double objective_j(const TrajectoryBatch& batch, const SocProblem& problem);
std::pair<double, double> terminal_penalties(const TrajectoryBatch& batch,
                                             const ValueModel& model, const SocProblem& problem);

// Weighted sum; terms with beta = 0 are skipped entirely (their breakdown
// entry reads 0).
LossBreakdown total_loss(const LossWeights& weights, const TrajectoryBatch& batch,
                         const ValueModel& model, const SocProblem& problem,
                         const HessianStrategy& strategy);

// Tape program of the weighted loss for a single trajectory, including the
// rollout when through_dynamics is set. Skipped terms are kNoNode.
struct TrajectoryLossNodes {
    ad::NodeId bsde = ad::kNoNode;
    ad::NodeId hjb = ad::kNoNode;
    ad::NodeId obj = ad::kNoNode;
    ad::NodeId term_val = ad::kNoNode;
    ad::NodeId term_grad = ad::kNoNode;
    ad::NodeId total = ad::kNoNode;
};

TrajectoryLossNodes record_trajectory_loss(RecordingContext& ctx, const SocProblem& problem,
                                           const TimeGrid& grid, const LossWeights& weights,
                                           DriftPolicy policy, const Eigen::VectorXd& z0,
                                           const rng::StreamKey& noise_key, std::uint32_t traj,
                                           bool through_dynamics,
                                           const HessianStrategy& strategy);

// Loss terms over an already-recorded trajectory (hess entries required when
// beta_2 > 0).
TrajectoryLossNodes record_loss_terms(RecordingContext& ctx, const SocProblem& problem,
                                      const TimeGrid& grid, const LossWeights& weights,
                                      const TapedTrajectory& path);

}  // namespace hjb
