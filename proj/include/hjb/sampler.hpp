#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "hjb/diff_engine.hpp"
#include "hjb/soc_problem.hpp"

namespace hjb {

struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    int steps = 1;  // N

    double ds() const { return (T - t0) / steps; }
    double time_at(int i) const { return t0 + i * ds(); }
};

// PmpFeedback drives the state with u* = u(s, z, -grad Phi); ZeroDrift is the
// pure random walk baseline, with the feedback control still recorded so the
// losses stay well-defined along the walk.
enum class DriftPolicy { PmpFeedback, ZeroDrift };

const char* drift_policy_name(DriftPolicy policy);
DriftPolicy drift_policy_from_name(const std::string& name);

// Euler-Maruyama sample paths. Z[j] is d x (N+1), U[j] is k x N, dW[j] is
// d x N; column i of U/dW belongs to the step from s_i to s_{i+1}.
struct TrajectoryBatch {
    TimeGrid grid;
    DriftPolicy policy = DriftPolicy::PmpFeedback;
    std::vector<Eigen::MatrixXd> Z;
    std::vector<Eigen::MatrixXd> U;
    std::vector<Eigen::MatrixXd> dW;

    int size() const { return static_cast<int>(Z.size()); }
};

// N(0, ds I_d) increment for one (trajectory, step) of a keyed stream.
Eigen::VectorXd brownian_increments(const rng::StreamKey& key, std::uint32_t traj,
                                    std::uint32_t step, int d, double ds);

// Rolls out n trajectories. Initial states come from rho keyed by init_key,
// noise from noise_key; both keys' `a` slots are free for the caller (e.g.
// the training iteration). Aborts with a diagnostic when a state overflows.
TrajectoryBatch rollout(const ValueModel& model, const SocProblem& problem, const TimeGrid& grid,
                        int n, DriftPolicy policy, const rng::StreamKey& init_key,
                        const rng::StreamKey& noise_key, int workers = 1);

// Single trajectory from a fixed start, used by rollout and by the taped path.
void rollout_one(const ValueModel& model, const SocProblem& problem, const TimeGrid& grid,
                 DriftPolicy policy, const Eigen::VectorXd& z0, const rng::StreamKey& noise_key,
                 std::uint32_t traj, Eigen::MatrixXd& Z, Eigen::MatrixXd& U, Eigen::MatrixXd& dW);

// Taped rollout: states become tape nodes so gradients flow through the
// dynamics. Returns per-step handles; z has N+1 entries, u and u-related
// evals have N+1 as well (the terminal control is recomputed by feedback).
struct TapedTrajectory {
    std::vector<ad::NodeId> z;     // states s_0..s_N
    std::vector<ad::NodeId> phi;   // Phi at each point
    std::vector<ad::NodeId> dphi_s;
    std::vector<ad::NodeId> grad;  // grad_z Phi at each point
    std::vector<ad::NodeId> u;     // feedback control at each point
    std::vector<ad::NodeId> hess;  // trace nodes at s_1..s_N when requested
    std::vector<Eigen::VectorXd> dw;  // Brownian increments, one per step
};

// hess_strategy non-null additionally records tr(sigma sigma' Hess Phi) at
// s_1..s_N (what the HJB penalty consumes). Hutchinson probe sites are keyed
// (strategy.key.a, traj, step).
TapedTrajectory record_rollout(RecordingContext& ctx, const SocProblem& problem,
                               const TimeGrid& grid, DriftPolicy policy,
                               const Eigen::VectorXd& z0, const rng::StreamKey& noise_key,
                               std::uint32_t traj, bool through_dynamics,
                               const HessianStrategy* hess_strategy = nullptr);

// Same per-point recording over an already-sampled path; the states enter the
// tape as constants, only the model evaluations stay differentiable.
TapedTrajectory record_states_as_constants(RecordingContext& ctx, const SocProblem& problem,
                                           const TimeGrid& grid, const Eigen::MatrixXd& Z,
                                           const Eigen::MatrixXd& dW,
                                           const HessianStrategy* hess_strategy = nullptr,
                                           std::uint32_t traj = 0);

// Re-applies the update rule to stored (Z0, U, dW); used to check the batch
// reconstruction invariant.
Eigen::MatrixXd reconstruct_states(const SocProblem& problem, const TrajectoryBatch& batch,
                                   int traj);

struct VisitHistogram {
    int axis_i = 0;
    int axis_j = 1;
    Eigen::VectorXd edges_i;  // bins+1 ascending edges
    Eigen::VectorXd edges_j;
    std::vector<double> slice_times;
    std::vector<int> slice_steps;
    std::vector<Eigen::MatrixXd> counts;  // one bins x bins grid per slice
    long trajectories = 0;
};

// Histograms the visited states of `batches` at the requested slice times
// (snapped to grid indices). Edges span [lo, hi] per axis.
VisitHistogram accumulate_histogram(const std::vector<TrajectoryBatch>& batches, int axis_i,
                                    int axis_j, int bins, const std::vector<double>& slice_times,
                                    double lo, double hi);

// Fraction of slice mass with bin centers within `radius` of `center`.
double histogram_mass_within(const VisitHistogram& hist, int slice, const Eigen::Vector2d& center,
                             double radius);

void write_histogram_csv(const VisitHistogram& hist, const std::string& out_dir);

}  // namespace hjb
