#pragma once

#include <string>

#include <json.hpp>

#include "hjb/trainer.hpp"

namespace hjb {

// One experiment, fully resolved: problem instance, model, loss, training
// recipe, evaluation settings and output directory. Parsing is strict —
// unknown keys anywhere are an error — and every field has a documented
// default so the resolved form can be echoed verbatim.
struct ExperimentConfig {
    // problem
    std::string problem_name = "benchmark";
    int d = 100;
    double sigma = 0.0;          // 0 => per-problem default
    double terminal_scale = 0.0; // 0 => per-problem default
    Eigen::VectorXd target;      // empty => per-problem default
    double t0 = 0.0;
    double T = 1.0;
    int steps = 50;

    Architecture arch;
    LossWeights weights;

    std::int64_t iterations = 0;
    int batch_size = 64;
    std::uint64_t seed = 0;
    DriftPolicy policy = DriftPolicy::PmpFeedback;
    bool backprop_through_dynamics = true;
    LrSchedule lr;
    std::int64_t eval_every = 500;
    std::int64_t checkpoint_every = 0;
    double grad_clip = 0.0;

    EvalSettings eval;
    double scaling_tolerance = 0.3;
    std::string out_dir = "out";

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    nlohmann::json to_json() const;

    SocProblem make_problem() const;
    TimeGrid make_grid() const { return {t0, T, steps}; }
    TrainConfig make_train_config() const;
};

void write_resolved_config(const ExperimentConfig& config, const std::string& out_dir);

}  // namespace hjb
