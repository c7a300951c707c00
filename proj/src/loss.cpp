#include "hjb/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace hjb {

using Eigen::VectorXd;

void LossWeights::validate() const {
    for (double b : beta)
        if (!(b >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
    if (exponent != 1 && exponent != 2)
        throw std::invalid_argument("loss exponent must be 1 or 2");
}

namespace {

double pow_p(double r, int p) { return p == 2 ? r * r : std::abs(r); }

}  // namespace

double p_bsde(const TrajectoryBatch& batch, const ValueModel& model, const SocProblem& problem,
              int exponent) {
    const int N = batch.grid.steps;
    const double ds = batch.grid.ds();
    double acc = 0.0;
    for (int j = 0; j < batch.size(); ++j) {
        const auto& Z = batch.Z[j];
        double traj_sum = 0.0;
        EvalRecord cur = eval_first_order(model, {batch.grid.time_at(0), Z.col(0)});
        for (int i = 0; i < N; ++i) {
            const double s = batch.grid.time_at(i);
            const VectorXd z = Z.col(i);
            const EvalRecord next =
                eval_first_order(model, {batch.grid.time_at(i + 1), Z.col(i + 1)});
            const double lrun = problem.running_cost(s, z, batch.U[j].col(i));
            const double noise_proj =
                cur.state_grad.dot(problem.diffusion(s, z).apply(batch.dW[j].col(i)));
            const double resid = next.value - cur.value + lrun * ds - noise_proj;
            traj_sum += pow_p(resid, exponent);
            cur = next;
        }
        acc += traj_sum;
    }
    return acc / batch.size();
}

double p_hjb(const TrajectoryBatch& batch, const ValueModel& model, const SocProblem& problem,
             int exponent, const HessianStrategy& strategy) {
    const int N = batch.grid.steps;
    const double ds = batch.grid.ds();
    double acc = 0.0;
    for (int j = 0; j < batch.size(); ++j) {
        double traj_sum = 0.0;
        for (int i = 1; i <= N; ++i) {
            const double s = batch.grid.time_at(i);
            const VectorXd z = batch.Z[j].col(i);
            const EvalRecord rec = eval_first_order(model, {s, z});
            HessianStrategy site = strategy;
            site.key = site.key.with(site.key.a, static_cast<std::uint32_t>(j),
                                     static_cast<std::uint32_t>(i));
            const double trace =
                eval_hessian_trace(model, {s, z}, problem.diffusion(s, z), site);
            const double resid =
                hamiltonian_residual(problem, s, z, rec.state_grad, trace) - rec.time_partial;
            traj_sum += pow_p(resid, exponent);
        }
        acc += ds * traj_sum;
    }
    return acc / batch.size();
}

double objective_j(const TrajectoryBatch& batch, const SocProblem& problem) {
    const int N = batch.grid.steps;
    const double ds = batch.grid.ds();
    double acc = 0.0;
    for (int j = 0; j < batch.size(); ++j) {
        double cost = problem.terminal_cost(batch.Z[j].col(N));
        double run = 0.0;
        for (int i = 1; i <= N; ++i)
            run += problem.running_cost(batch.grid.time_at(i), batch.Z[j].col(i),
                                        batch.U[j].col(i - 1));
        acc += cost + ds * run;
    }
    return acc / batch.size();
}

std::pair<double, double> terminal_penalties(const TrajectoryBatch& batch,
                                             const ValueModel& model,
                                             const SocProblem& problem) {
    const int N = batch.grid.steps;
    double val_acc = 0.0;
    double grad_acc = 0.0;
    for (int j = 0; j < batch.size(); ++j) {
        const VectorXd zN = batch.Z[j].col(N);
        const EvalRecord rec = eval_first_order(model, {batch.grid.time_at(N), zN});
        val_acc += std::abs(problem.terminal_cost(zN) - rec.value);
        grad_acc += (problem.terminal_grad(zN) - rec.state_grad).norm();
    }
    return {val_acc / batch.size(), grad_acc / batch.size()};
}

LossBreakdown total_loss(const LossWeights& weights, const TrajectoryBatch& batch,
                         const ValueModel& model, const SocProblem& problem,
                         const HessianStrategy& strategy) {
    weights.validate();
    LossBreakdown out;
    if (weights.beta[0] > 0.0) out.bsde = p_bsde(batch, model, problem, weights.exponent);
    if (weights.beta[1] > 0.0)
        out.hjb = p_hjb(batch, model, problem, weights.exponent, strategy);
    if (weights.beta[2] > 0.0) out.obj = objective_j(batch, problem);
    if (weights.beta[3] > 0.0 || weights.beta[4] > 0.0) {
        const auto [val, grad] = terminal_penalties(batch, model, problem);
        if (weights.beta[3] > 0.0) out.term_val = val;
        if (weights.beta[4] > 0.0) out.term_grad = grad;
    }
    out.total = weights.beta[0] * out.bsde + weights.beta[1] * out.hjb +
                weights.beta[2] * out.obj + weights.beta[3] * out.term_val +
                weights.beta[4] * out.term_grad;
    return out;
}

TrajectoryLossNodes record_trajectory_loss(RecordingContext& ctx, const SocProblem& problem,
                                           const TimeGrid& grid, const LossWeights& weights,
                                           DriftPolicy policy, const Eigen::VectorXd& z0,
                                           const rng::StreamKey& noise_key, std::uint32_t traj,
                                           bool through_dynamics,
                                           const HessianStrategy& strategy) {
    weights.validate();
    const bool want_hess = weights.beta[1] > 0.0;
    const TapedTrajectory path = record_rollout(ctx, problem, grid, policy, z0, noise_key, traj,
                                                through_dynamics,
                                                want_hess ? &strategy : nullptr);
    return record_loss_terms(ctx, problem, grid, weights, path);
}

TrajectoryLossNodes record_loss_terms(RecordingContext& ctx, const SocProblem& problem,
                                      const TimeGrid& grid, const LossWeights& weights,
                                      const TapedTrajectory& path) {
    weights.validate();
    ad::Tape& t = ctx.tape();
    const int N = grid.steps;
    const double ds = grid.ds();
    const int p = weights.exponent;
    const bool want_hess = weights.beta[1] > 0.0;
    if (want_hess && static_cast<int>(path.hess.size()) != N)
        throw std::invalid_argument("record_loss_terms: HJB term needs hessian-trace nodes");

    TrajectoryLossNodes nodes;
    if (weights.beta[0] > 0.0) {
        ad::NodeId sum = ad::kNoNode;
        for (int i = 0; i < N; ++i) {
            const double s = grid.time_at(i);
            const ad::NodeId lrun = problem.running_cost_t(t, s, path.z[i], path.u[i]);
            const VectorXd sdw = problem.diffusion(s, t.value(path.z[i])).apply(path.dw[i]);
            const ad::NodeId proj = t.dot(path.grad[i], t.constant(sdw));
            const ad::NodeId resid = t.add(t.sub(path.phi[i + 1], path.phi[i]),
                                           t.sub(t.scale(lrun, ds), proj));
            const ad::NodeId term = t.abs_pow(resid, p);
            sum = sum == ad::kNoNode ? term : t.add(sum, term);
        }
        nodes.bsde = sum;
    }
    if (want_hess) {
        ad::NodeId sum = ad::kNoNode;
        for (int i = 1; i <= N; ++i) {
            const double s = grid.time_at(i);
            const ad::NodeId h = hamiltonian_residual_t(t, problem, s, path.z[i], path.grad[i],
                                                        path.hess[i - 1]);
            const ad::NodeId term = t.abs_pow(t.sub(h, path.dphi_s[i]), p);
            sum = sum == ad::kNoNode ? term : t.add(sum, term);
        }
        nodes.hjb = t.scale(sum, ds);
    }
    if (weights.beta[2] > 0.0) {
        ad::NodeId run = ad::kNoNode;
        for (int i = 1; i <= N; ++i) {
            const ad::NodeId l =
                problem.running_cost_t(t, grid.time_at(i), path.z[i], path.u[i - 1]);
            run = run == ad::kNoNode ? l : t.add(run, l);
        }
        ad::NodeId obj = problem.terminal_cost_t(t, path.z[N]);
        if (run != ad::kNoNode) obj = t.add(obj, t.scale(run, ds));
        nodes.obj = obj;
    }
    if (weights.beta[3] > 0.0) {
        nodes.term_val =
            t.abs_pow(t.sub(problem.terminal_cost_t(t, path.z[N]), path.phi[N]), 1);
    }
    if (weights.beta[4] > 0.0) {
        nodes.term_grad =
            t.norm(t.sub(problem.terminal_grad_t(t, path.z[N]), path.grad[N]));
    }

    ad::NodeId total = ad::kNoNode;
    auto accumulate = [&](ad::NodeId term, double beta) {
        if (term == ad::kNoNode || beta == 0.0) return;
        const ad::NodeId scaled = t.scale(term, beta);
        total = total == ad::kNoNode ? scaled : t.add(total, scaled);
    };
    accumulate(nodes.bsde, weights.beta[0]);
    accumulate(nodes.hjb, weights.beta[1]);
    accumulate(nodes.obj, weights.beta[2]);
    accumulate(nodes.term_val, weights.beta[3]);
    accumulate(nodes.term_grad, weights.beta[4]);
    nodes.total = total == ad::kNoNode ? t.constant_scalar(0.0) : total;
    return nodes;
}

}  // namespace hjb
