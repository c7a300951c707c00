#include "hjb/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace hjb {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& allowed) {
    if (!j.is_object())
        throw std::invalid_argument("config section '" + section + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key))
            throw std::invalid_argument("config: unknown key '" + section + "." + key + "'");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

struct ProblemDefaults {
    double sigma;
    double terminal_scale;
    double target_value;
    BodyKind kind;
    int width;
    int depth;
    Act activation;
    bool quad_head;
    std::array<double, 5> beta;
    std::int64_t iterations;
    LrSchedule lr;
};

ProblemDefaults defaults_for(const std::string& name) {
    if (name == "trajectory2d")
        return {0.5, 50.0, 1.5, BodyKind::ResNet, 32, 1, Act::LogCosh, true,
                {1.0, 1.0, 1.0, 0.1, 0.1}, 3000,
                LrSchedule{{{0, 0.01}, {1500, 0.001}}}};
    if (name == "benchmark")
        return {std::sqrt(2.0), 1.0, 0.0, BodyKind::Mlp, 256, 4, Act::Sin, false,
                {1.0, 0.0, 20.0, 1.0, 1.0}, 50000,
                LrSchedule{{{0, 1e-3}, {20000, 1e-4}}}};
    if (name == "benchmark_shifted")
        return {2.0 * std::sqrt(2.0) / 5.0, 1000.0, 3.0, BodyKind::Mlp, 256, 4, Act::Sin, false,
                {1.0, 0.0, 20.0, 1.0, 1.0}, 50000,
                LrSchedule{{{0, 1e-3}, {20000, 1e-4}}}};
    throw std::invalid_argument("config: unknown problem.name '" + name + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    check_keys(j, "(root)", {"problem", "model", "loss", "train", "eval", "output"});
    ExperimentConfig cfg;

    const json problem = j.value("problem", json::object());
    check_keys(problem, "problem", {"name", "d", "sigma", "terminal_scale", "target", "t", "T",
                                    "N"});
    cfg.problem_name = get_or<std::string>(problem, "name", "benchmark");
    const ProblemDefaults defs = defaults_for(cfg.problem_name);
    cfg.d = get_or<int>(problem, "d", cfg.problem_name == "trajectory2d" ? 2 : 100);
    cfg.sigma = get_or<double>(problem, "sigma", defs.sigma);
    cfg.terminal_scale = get_or<double>(problem, "terminal_scale", defs.terminal_scale);
    if (problem.contains("target")) {
        const auto& t = problem.at("target");
        if (t.is_number()) {
            cfg.target = Eigen::VectorXd::Constant(cfg.d, t.get<double>());
        } else {
            const auto v = t.get<std::vector<double>>();
            if (static_cast<int>(v.size()) != cfg.d)
                throw std::invalid_argument("config: problem.target length must equal d");
            cfg.target = Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                           static_cast<Eigen::Index>(v.size()));
        }
    } else {
        cfg.target = Eigen::VectorXd::Constant(cfg.d, defs.target_value);
    }
    cfg.t0 = get_or<double>(problem, "t", 0.0);
    cfg.T = get_or<double>(problem, "T", 1.0);
    cfg.steps = get_or<int>(problem, "N", 50);
    if (cfg.T <= cfg.t0) throw std::invalid_argument("config: problem.T must exceed problem.t");
    if (cfg.steps < 1) throw std::invalid_argument("config: problem.N must be >= 1");

    const json model = j.value("model", json::object());
    check_keys(model, "model",
               {"kind", "width", "depth", "activation", "quad_rank", "use_quadratic_head"});
    cfg.arch.kind = model.contains("kind")
                        ? body_kind_from_name(model.at("kind").get<std::string>())
                        : defs.kind;
    cfg.arch.width = get_or<int>(model, "width", defs.width);
    cfg.arch.depth = get_or<int>(model, "depth", defs.depth);
    cfg.arch.activation = model.contains("activation")
                              ? act_from_name(model.at("activation").get<std::string>())
                              : defs.activation;
    cfg.arch.quad_rank = get_or<int>(model, "quad_rank", 0);  // 0 = min(10, d+1)
    cfg.arch.use_quadratic_head = get_or<bool>(model, "use_quadratic_head", defs.quad_head);

    const json loss = j.value("loss", json::object());
    check_keys(loss, "loss", {"beta", "exponent"});
    if (loss.contains("beta")) {
        const auto beta = loss.at("beta").get<std::vector<double>>();
        if (beta.size() != 5)
            throw std::invalid_argument("config: loss.beta must have exactly 5 entries");
        std::copy(beta.begin(), beta.end(), cfg.weights.beta.begin());
    } else {
        cfg.weights.beta = defs.beta;
    }
    cfg.weights.exponent = get_or<int>(loss, "exponent", 2);
    cfg.weights.validate();

    const json train = j.value("train", json::object());
    check_keys(train, "train",
               {"iterations", "batch_size", "lr_schedule", "seed", "drift_policy",
                "backprop_mode", "eval_every", "checkpoint_every", "grad_clip", "workers"});
    cfg.iterations = get_or<std::int64_t>(train, "iterations", defs.iterations);
    cfg.batch_size = get_or<int>(train, "batch_size", 64);
    if (train.contains("lr_schedule")) {
        cfg.lr.stages.clear();
        for (const auto& stage : train.at("lr_schedule")) {
            const auto pair = stage.get<std::vector<double>>();
            if (pair.size() != 2)
                throw std::invalid_argument("config: train.lr_schedule entries are [iter, rate]");
            cfg.lr.stages.emplace_back(static_cast<std::int64_t>(pair[0]), pair[1]);
        }
    } else {
        cfg.lr = defs.lr;
    }
    cfg.lr.validate();
    cfg.seed = get_or<std::uint64_t>(train, "seed", 0);
    cfg.policy = train.contains("drift_policy")
                     ? drift_policy_from_name(train.at("drift_policy").get<std::string>())
                     : DriftPolicy::PmpFeedback;
    if (train.contains("backprop_mode")) {
        const auto mode = train.at("backprop_mode").get<std::string>();
        if (mode == "through_dynamics")
            cfg.backprop_through_dynamics = true;
        else if (mode == "frozen_states")
            cfg.backprop_through_dynamics = false;
        else
            throw std::invalid_argument(
                "config: train.backprop_mode must be through_dynamics|frozen_states");
    }
    cfg.eval_every = get_or<std::int64_t>(train, "eval_every", 500);
    cfg.checkpoint_every = get_or<std::int64_t>(train, "checkpoint_every", 0);
    cfg.grad_clip = get_or<double>(train, "grad_clip", 0.0);

    const json eval = j.value("eval", json::object());
    check_keys(eval, "eval", {"n_rollouts", "n_traj", "oracle_samples", "scaling_tolerance"});
    cfg.eval.n_rollouts = get_or<int>(eval, "n_rollouts", 256);
    cfg.eval.n_traj = get_or<int>(eval, "n_traj", 10);
    cfg.eval.oracle_samples = get_or<long>(eval, "oracle_samples", 100000);
    cfg.scaling_tolerance = get_or<double>(eval, "scaling_tolerance", 0.3);

    const json output = j.value("output", json::object());
    check_keys(output, "output", {"dir"});
    cfg.out_dir = get_or<std::string>(output, "dir", "out");
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
    json j;
    j["problem"] = {{"name", problem_name}, {"d", d},      {"sigma", sigma},
                    {"terminal_scale", terminal_scale},    {"t", t0},
                    {"T", T},               {"N", steps}};
    j["problem"]["target"] =
        std::vector<double>(target.data(), target.data() + target.size());
    j["model"] = {{"kind", body_kind_name(arch.kind)},
                  {"width", arch.width},
                  {"depth", arch.depth},
                  {"activation", act_name(arch.activation)},
                  {"quad_rank", arch.quad_rank == 0 ? default_quad_rank(d) : arch.quad_rank},
                  {"use_quadratic_head", arch.use_quadratic_head}};
    j["loss"] = {{"beta", weights.beta}, {"exponent", weights.exponent}};
    json schedule = json::array();
    for (const auto& [start, rate] : lr.stages)
        schedule.push_back(json::array({start, rate}));
    j["train"] = {{"iterations", iterations},
                  {"batch_size", batch_size},
                  {"lr_schedule", schedule},
                  {"seed", seed},
                  {"drift_policy", drift_policy_name(policy)},
                  {"backprop_mode",
                   backprop_through_dynamics ? "through_dynamics" : "frozen_states"},
                  {"eval_every", eval_every},
                  {"checkpoint_every", checkpoint_every},
                  {"grad_clip", grad_clip}};
    j["eval"] = {{"n_rollouts", eval.n_rollouts},
                 {"n_traj", eval.n_traj},
                 {"oracle_samples", eval.oracle_samples},
                 {"scaling_tolerance", scaling_tolerance}};
    j["output"] = {{"dir", out_dir}};
    return j;
}

SocProblem ExperimentConfig::make_problem() const {
    if (problem_name == "trajectory2d") {
        if (d != 2) throw std::invalid_argument("config: trajectory2d requires d = 2");
        return make_trajectory2d(sigma, t0, T, terminal_scale, target);
    }
    SocProblem p = make_benchmark(d, sigma, terminal_scale, target, T);
    p.name = problem_name;
    p.t0 = t0;
    return p;
}

TrainConfig ExperimentConfig::make_train_config() const {
    TrainConfig tc;
    tc.iterations = iterations;
    tc.batch_size = batch_size;
    tc.seed = seed;
    tc.weights = weights;
    tc.grid = make_grid();
    tc.policy = policy;
    tc.backprop_through_dynamics = backprop_through_dynamics;
    tc.lr = lr;
    tc.eval_every = eval_every;
    tc.checkpoint_every = checkpoint_every;
    tc.grad_clip = grad_clip;
    tc.eval = eval;
    tc.out_dir = out_dir;
    return tc;
}

void write_resolved_config(const ExperimentConfig& config, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "resolved_config.json",
                      std::ios::binary);
    if (!out) throw std::runtime_error("cannot write resolved_config.json in " + out_dir);
    out << config.to_json().dump(2) << '\n';
}

}  // namespace hjb
