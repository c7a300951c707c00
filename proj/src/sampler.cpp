#include "hjb/sampler.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "hjb/parallel.hpp"

namespace hjb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* drift_policy_name(DriftPolicy policy) {
    return policy == DriftPolicy::PmpFeedback ? "pmp_feedback" : "zero_drift";
}

DriftPolicy drift_policy_from_name(const std::string& name) {
    if (name == "pmp_feedback") return DriftPolicy::PmpFeedback;
    if (name == "zero_drift") return DriftPolicy::ZeroDrift;
    throw std::invalid_argument("unknown drift policy '" + name +
                                "' (expected pmp_feedback|zero_drift)");
}

Eigen::VectorXd brownian_increments(const rng::StreamKey& key, std::uint32_t traj,
                                    std::uint32_t step, int d, double ds) {
    if (ds <= 0.0) throw std::invalid_argument("brownian_increments: ds must be positive");
    return rng::gaussian_vector(key.with(key.a, traj, step), d, std::sqrt(ds));
}

void rollout_one(const ValueModel& model, const SocProblem& problem, const TimeGrid& grid,
                 DriftPolicy policy, const Eigen::VectorXd& z0, const rng::StreamKey& noise_key,
                 std::uint32_t traj, Eigen::MatrixXd& Z, Eigen::MatrixXd& U,
                 Eigen::MatrixXd& dW) {
    const int N = grid.steps;
    const int d = problem.d;
    const double ds = grid.ds();
    Z.resize(d, N + 1);
    U.resize(problem.k, N);
    dW.resize(d, N);
    Z.col(0) = z0;

    VectorXd z = z0;
    for (int i = 0; i < N; ++i) {
        const double s = grid.time_at(i);
        const EvalRecord rec = eval_first_order(model, {s, z});
        const VectorXd u = problem.feedback(s, z, -rec.state_grad);
        U.col(i) = u;
        dW.col(i) = brownian_increments(noise_key, traj, static_cast<std::uint32_t>(i), d, ds);
        const VectorXd noise = problem.diffusion(s, z).apply(dW.col(i));
        if (policy == DriftPolicy::PmpFeedback)
            z = z + problem.drift(s, z, u) * ds + noise;
        else
            z = z + noise;
        if (!z.allFinite())
            throw std::runtime_error("rollout: non-finite state in trajectory " +
                                     std::to_string(traj) + " at step " + std::to_string(i + 1));
        Z.col(i + 1) = z;
    }
}

TrajectoryBatch rollout(const ValueModel& model, const SocProblem& problem, const TimeGrid& grid,
                        int n, DriftPolicy policy, const rng::StreamKey& init_key,
                        const rng::StreamKey& noise_key, int workers) {
    if (n < 1) throw std::invalid_argument("rollout: n must be >= 1");
    if (model.d != problem.d) throw std::invalid_argument("rollout: model/problem d mismatch");
    TrajectoryBatch batch;
    batch.grid = grid;
    batch.policy = policy;
    batch.Z.resize(n);
    batch.U.resize(n);
    batch.dW.resize(n);
    parallel_for(n, workers, [&](int j) {
        const VectorXd z0 =
            sample_initial_one(problem, init_key, static_cast<std::uint32_t>(j));
        rollout_one(model, problem, grid, policy, z0, noise_key,
                    static_cast<std::uint32_t>(j), batch.Z[j], batch.U[j], batch.dW[j]);
    });
    return batch;
}

TapedTrajectory record_rollout(RecordingContext& ctx, const SocProblem& problem,
                               const TimeGrid& grid, DriftPolicy policy,
                               const Eigen::VectorXd& z0, const rng::StreamKey& noise_key,
                               std::uint32_t traj, bool through_dynamics,
                               const HessianStrategy* hess_strategy) {
    const int N = grid.steps;
    const int d = problem.d;
    const double ds = grid.ds();
    ad::Tape& t = ctx.tape();

    // ZeroDrift states carry no theta dependence, so they are constants either
    // way; the controls are still recorded differentiably.
    const bool chain = through_dynamics && policy == DriftPolicy::PmpFeedback;
    if (!chain) {
        MatrixXd Zplain, Uplain, dWplain;
        rollout_one(ctx.model(), problem, grid, policy, z0, noise_key, traj, Zplain, Uplain,
                    dWplain);
        return record_states_as_constants(ctx, problem, grid, Zplain, dWplain, hess_strategy,
                                          traj);
    }

    TapedTrajectory out;
    out.z.reserve(N + 1);
    out.phi.reserve(N + 1);
    out.dphi_s.reserve(N + 1);
    out.grad.reserve(N + 1);
    out.u.reserve(N + 1);
    out.dw.reserve(N);

    ad::NodeId z = t.constant(z0);
    for (int i = 0; i <= N; ++i) {
        const double s = grid.time_at(i);
        ModelEvalNodes eval;
        if (hess_strategy != nullptr && i >= 1) {
            const DiffusionEval sigma = problem.diffusion(s, t.value(z));
            HessianStrategy strategy = *hess_strategy;
            strategy.key = strategy.key.with(strategy.key.a, traj, static_cast<std::uint32_t>(i));
            eval = ctx.record_eval(s, z, 2, &sigma, &strategy);
            out.hess.push_back(eval.hess_trace);
        } else {
            eval = ctx.record_eval(s, z, 1);
        }
        out.z.push_back(z);
        out.phi.push_back(eval.phi);
        out.dphi_s.push_back(eval.time_partial);
        out.grad.push_back(eval.state_grad);
        out.u.push_back(problem.feedback_t(t, s, z, t.scale(eval.state_grad, -1.0)));
        if (i == N) break;

        out.dw.push_back(
            brownian_increments(noise_key, traj, static_cast<std::uint32_t>(i), d, ds));
        const VectorXd noise = problem.diffusion(s, t.value(z)).apply(out.dw.back());
        const ad::NodeId drift = problem.drift_t(t, s, z, out.u.back());
        z = t.add_const(t.add(z, t.scale(drift, ds)), noise);
        if (!t.value(z).allFinite())
            throw std::runtime_error("rollout: non-finite state in trajectory " +
                                     std::to_string(traj) + " at step " +
                                     std::to_string(i + 1));
    }
    return out;
}

TapedTrajectory record_states_as_constants(RecordingContext& ctx, const SocProblem& problem,
                                           const TimeGrid& grid, const Eigen::MatrixXd& Z,
                                           const Eigen::MatrixXd& dW,
                                           const HessianStrategy* hess_strategy,
                                           std::uint32_t traj) {
    const int N = grid.steps;
    ad::Tape& t = ctx.tape();
    TapedTrajectory out;
    out.z.reserve(N + 1);
    out.phi.reserve(N + 1);
    out.dphi_s.reserve(N + 1);
    out.grad.reserve(N + 1);
    out.u.reserve(N + 1);
    out.dw.reserve(N);

    for (int i = 0; i <= N; ++i) {
        const double s = grid.time_at(i);
        const ad::NodeId z = t.constant(Z.col(i));
        ModelEvalNodes eval;
        if (hess_strategy != nullptr && i >= 1) {
            const DiffusionEval sigma = problem.diffusion(s, Z.col(i));
            HessianStrategy strategy = *hess_strategy;
            strategy.key = strategy.key.with(strategy.key.a, traj, static_cast<std::uint32_t>(i));
            eval = ctx.record_eval(s, z, 2, &sigma, &strategy);
            out.hess.push_back(eval.hess_trace);
        } else {
            eval = ctx.record_eval(s, z, 1);
        }
        out.z.push_back(z);
        out.phi.push_back(eval.phi);
        out.dphi_s.push_back(eval.time_partial);
        out.grad.push_back(eval.state_grad);
        out.u.push_back(problem.feedback_t(t, s, z, t.scale(eval.state_grad, -1.0)));
        if (i < N) out.dw.push_back(dW.col(i));
    }
    return out;
}

Eigen::MatrixXd reconstruct_states(const SocProblem& problem, const TrajectoryBatch& batch,
                                   int traj) {
    const int N = batch.grid.steps;
    const double ds = batch.grid.ds();
    const MatrixXd& Z = batch.Z[traj];
    MatrixXd R(Z.rows(), Z.cols());
    R.col(0) = Z.col(0);
    VectorXd z = Z.col(0);
    for (int i = 0; i < N; ++i) {
        const double s = batch.grid.time_at(i);
        const VectorXd noise = problem.diffusion(s, z).apply(batch.dW[traj].col(i));
        if (batch.policy == DriftPolicy::PmpFeedback)
            z = z + problem.drift(s, z, batch.U[traj].col(i)) * ds + noise;
        else
            z = z + noise;
        R.col(i + 1) = z;
    }
    return R;
}

VisitHistogram accumulate_histogram(const std::vector<TrajectoryBatch>& batches, int axis_i,
                                    int axis_j, int bins, const std::vector<double>& slice_times,
                                    double lo, double hi) {
    if (batches.empty()) throw std::invalid_argument("accumulate_histogram: no batches");
    if (bins < 1) throw std::invalid_argument("accumulate_histogram: bins must be >= 1");
    const int d = static_cast<int>(batches.front().Z.front().rows());
    if (axis_i < 0 || axis_i >= d || axis_j < 0 || axis_j >= d)
        throw std::invalid_argument("accumulate_histogram: axis index out of range");

    VisitHistogram hist;
    hist.axis_i = axis_i;
    hist.axis_j = axis_j;
    hist.edges_i = Eigen::VectorXd::LinSpaced(bins + 1, lo, hi);
    hist.edges_j = Eigen::VectorXd::LinSpaced(bins + 1, lo, hi);
    hist.slice_times = slice_times;

    const TimeGrid& grid = batches.front().grid;
    for (double s : slice_times) {
        int idx = static_cast<int>(std::lround((s - grid.t0) / grid.ds()));
        idx = std::min(std::max(idx, 0), grid.steps);
        hist.slice_steps.push_back(idx);
        hist.counts.emplace_back(Eigen::MatrixXd::Zero(bins, bins));
    }

    const double width = (hi - lo) / bins;
    auto bin_of = [&](double x) {
        const int b = static_cast<int>(std::floor((x - lo) / width));
        return std::min(std::max(b, 0), bins - 1);
    };
    // Fixed accumulation order: batch, then trajectory.
    for (const auto& batch : batches) {
        for (const auto& Z : batch.Z) {
            for (std::size_t k = 0; k < hist.slice_steps.size(); ++k) {
                const int step = hist.slice_steps[k];
                hist.counts[k](bin_of(Z(axis_i, step)), bin_of(Z(axis_j, step))) += 1.0;
            }
            ++hist.trajectories;
        }
    }
    return hist;
}

double histogram_mass_within(const VisitHistogram& hist, int slice, const Eigen::Vector2d& center,
                             double radius) {
    const Eigen::MatrixXd& counts = hist.counts.at(static_cast<std::size_t>(slice));
    const int bins = static_cast<int>(counts.rows());
    double covered = 0.0;
    double total = 0.0;
    for (int bi = 0; bi < bins; ++bi) {
        const double ci = 0.5 * (hist.edges_i[bi] + hist.edges_i[bi + 1]);
        for (int bj = 0; bj < bins; ++bj) {
            const double cj = 0.5 * (hist.edges_j[bj] + hist.edges_j[bj + 1]);
            total += counts(bi, bj);
            const double dist = std::hypot(ci - center[0], cj - center[1]);
            if (dist <= radius) covered += counts(bi, bj);
        }
    }
    return total > 0.0 ? covered / total : 0.0;
}

void write_histogram_csv(const VisitHistogram& hist, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        std::ofstream out(fs::path(out_dir) / ("hist_slice_" + std::to_string(k) + ".csv"));
        if (!out) throw std::runtime_error("cannot write histogram slice in " + out_dir);
        const auto& counts = hist.counts[k];
        for (int i = 0; i < counts.rows(); ++i) {
            for (int j = 0; j < counts.cols(); ++j) {
                if (j) out << ',';
                out << static_cast<long long>(counts(i, j));
            }
            out << '\n';
        }
    }
    nlohmann::json meta;
    meta["axis_i"] = hist.axis_i;
    meta["axis_j"] = hist.axis_j;
    meta["edges_i"] = std::vector<double>(hist.edges_i.data(),
                                          hist.edges_i.data() + hist.edges_i.size());
    meta["edges_j"] = std::vector<double>(hist.edges_j.data(),
                                          hist.edges_j.data() + hist.edges_j.size());
    meta["slice_times"] = hist.slice_times;
    meta["slice_steps"] = hist.slice_steps;
    meta["trajectories"] = hist.trajectories;
    std::ofstream out(fs::path(out_dir) / "hist_meta.json");
    if (!out) throw std::runtime_error("cannot write histogram metadata in " + out_dir);
    out << meta.dump(2) << '\n';
}

}  // namespace hjb
