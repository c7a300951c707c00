#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hjb/loss.hpp"
#include "hjb/oracle_eval.hpp"

namespace hjb {

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState zeros(Eigen::Index n) {
        return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0, 0.9, 0.999, 1e-8};
    }
};

void adam_step(AdamState& adam, Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr);

// Piecewise-constant schedule: (start_iteration, rate) stages, first stage at 0.
struct LrSchedule {
    std::vector<std::pair<std::int64_t, double>> stages{{0, 1e-3}};

    void validate() const;
    double rate_at(std::int64_t iteration) const;
};

struct EvalSettings {
    int n_rollouts = 256;    // for the policy objective
    int n_traj = 10;         // for RE / RE0
    long oracle_samples = 100000;  // 0 disables oracle metrics
};

struct TrainConfig {
    std::int64_t iterations = 1000;
    int batch_size = 64;
    std::uint64_t seed = 0;
    LossWeights weights;
    TimeGrid grid;
    DriftPolicy policy = DriftPolicy::PmpFeedback;
    bool backprop_through_dynamics = true;
    LrSchedule lr;
    std::int64_t eval_every = 0;        // 0 = never
    std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only
    double grad_clip = 0.0;             // max gradient norm; 0 = off
    EvalSettings eval;
    int workers = 0;  // 0 = auto (HJB_THREADS / hardware)
    std::string out_dir;  // empty = in-memory only
};

struct LogRow {
    std::int64_t iteration = 0;
    double lr = 0.0;
    LossBreakdown loss;
    double wallclock_s = 0.0;
};

struct MetricsRow {
    std::int64_t iteration = 0;
    double j_mean = 0.0;
    double j_stderr = 0.0;
    std::optional<double> re;
    std::optional<double> re0;
};

struct RunLog {
    std::vector<LogRow> rows;
    std::vector<MetricsRow> metrics;
};

struct TrainResult {
    ValueModel model;
    AdamState adam;
    RunLog log;
};

// Fresh training run: init -> loop(sample, rollout, loss, gradient, adam).
TrainResult train(const TrainConfig& config, const SocProblem& problem,
                  const Architecture& arch);

// Continues from (model, adam) at iteration adam.step; a resumed run matches
// an uninterrupted one bit for bit.
TrainResult train_continue(const TrainConfig& config, const SocProblem& problem,
                           ValueModel model, AdamState adam);

// Policy-objective (and, when the oracle applies, RE/RE0) metrics for the
// frozen model; runs on dedicated evaluation streams.
MetricsRow evaluate_hook(const ValueModel& model, const SocProblem& problem,
                         const TimeGrid& grid, const EvalSettings& eval, std::uint64_t seed,
                         std::int64_t iteration, int workers);

// 17-significant-digit formatting shared by every CSV writer, so identical
// runs produce identical bytes.
std::string format_csv_double(double v);

}  // namespace hjb
