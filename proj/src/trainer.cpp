#include "hjb/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "hjb/parallel.hpp"

namespace hjb {

namespace fs = std::filesystem;
using Eigen::VectorXd;

void adam_step(AdamState& adam, Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
    if (adam.m.size() != theta.size() || adam.v.size() != theta.size() ||
        grad.size() != theta.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    adam.step += 1;
    adam.m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grad;
    adam.v = adam.beta2 * adam.v + (1.0 - adam.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
    theta -= (lr / bc1) * adam.m.cwiseQuotient(((adam.v / bc2).cwiseSqrt().array() + adam.epsilon)
                                                   .matrix());
}

void LrSchedule::validate() const {
    if (stages.empty()) throw std::invalid_argument("lr schedule must have at least one stage");
    if (stages.front().first != 0)
        throw std::invalid_argument("lr schedule must start at iteration 0");
    std::int64_t prev = -1;
    for (const auto& [start, rate] : stages) {
        if (start <= prev) throw std::invalid_argument("lr schedule iterations must increase");
        if (!(rate > 0.0)) throw std::invalid_argument("lr rates must be positive");
        prev = start;
    }
}

double LrSchedule::rate_at(std::int64_t iteration) const {
    double rate = stages.front().second;
    for (const auto& [start, r] : stages) {
        if (iteration >= start) rate = r;
    }
    return rate;
}

std::string format_csv_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

MetricsRow evaluate_hook(const ValueModel& model, const SocProblem& problem,
                         const TimeGrid& grid, const EvalSettings& eval, std::uint64_t seed,
                         std::int64_t iteration, int workers) {
    MetricsRow row;
    row.iteration = iteration;
    const auto epoch = static_cast<std::uint32_t>(iteration);
    const auto [j_mean, j_stderr] =
        evaluate_policy_objective(model, problem, grid, eval.n_rollouts, seed, epoch, workers);
    row.j_mean = j_mean;
    row.j_stderr = j_stderr;
    if (problem.benchmark_family && eval.oracle_samples > 0) {
        const ErrorReport report = relative_errors(model, problem, grid, eval.n_traj, seed,
                                                   epoch, eval.oracle_samples, workers);
        row.re = report.re;
        row.re0 = report.re0;
    }
    return row;
}

namespace {

struct CsvLogs {
    std::ofstream train_log;
    std::ofstream metrics;

    explicit CsvLogs(const std::string& dir) {
        fs::create_directories(dir);
        train_log.open(fs::path(dir) / "train_log.csv", std::ios::binary);
        metrics.open(fs::path(dir) / "metrics.csv", std::ios::binary);
        if (!train_log || !metrics)
            throw std::runtime_error("cannot open training logs in " + dir);
        train_log << "iteration,lr,loss_total,loss_bsde,loss_hjb,loss_obj,loss_term_val,"
                     "loss_term_grad,wallclock_s\n";
        metrics << "iteration,j_mean,j_stderr,re,re0\n";
    }

    void write_row(const LogRow& row) {
        train_log << row.iteration << ',' << format_csv_double(row.lr) << ','
                  << format_csv_double(row.loss.total) << ','
                  << format_csv_double(row.loss.bsde) << ',' << format_csv_double(row.loss.hjb)
                  << ',' << format_csv_double(row.loss.obj) << ','
                  << format_csv_double(row.loss.term_val) << ','
                  << format_csv_double(row.loss.term_grad) << ','
                  << format_csv_double(row.wallclock_s) << '\n';
        train_log.flush();
    }

    void write_metrics(const MetricsRow& row) {
        metrics << row.iteration << ',' << format_csv_double(row.j_mean) << ','
                << format_csv_double(row.j_stderr) << ','
                << (row.re ? format_csv_double(*row.re) : std::string()) << ','
                << (row.re0 ? format_csv_double(*row.re0) : std::string()) << '\n';
        metrics.flush();
    }
};

void write_checkpoint_file(const ValueModel& model, const AdamState& adam, std::uint64_t seed,
                           std::int64_t iteration, const std::string& dir) {
    CheckpointExtras extras;
    extras.adam_m = adam.m;
    extras.adam_v = adam.v;
    extras.adam_step = adam.step;
    extras.rng_seed = seed;
    extras.rng_iteration = iteration;
    save_checkpoint(model, extras,
                    (fs::path(dir) / ("checkpoint_" + std::to_string(iteration) + ".json"))
                        .string());
}

}  // namespace

TrainResult train_continue(const TrainConfig& config, const SocProblem& problem,
                           ValueModel model, AdamState adam) {
    config.weights.validate();
    config.lr.validate();
    if (model.d != problem.d)
        throw std::invalid_argument("train: model/problem dimension mismatch");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

    const int n = config.batch_size;
    const int workers = resolve_workers(config.workers);
    TrainResult result{std::move(model), std::move(adam), {}};

    std::unique_ptr<CsvLogs> logs;
    if (!config.out_dir.empty()) logs = std::make_unique<CsvLogs>(config.out_dir);

    // Per-trajectory recording contexts and gradient slots, reused across
    // iterations; reductions always run in trajectory order.
    std::vector<std::unique_ptr<RecordingContext>> contexts;
    contexts.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        contexts.push_back(std::make_unique<RecordingContext>(result.model));
    std::vector<VectorXd> grads(static_cast<std::size_t>(n));
    std::vector<LossBreakdown> parts(static_cast<std::size_t>(n));

    const auto t_start = std::chrono::steady_clock::now();
    for (std::int64_t it = result.adam.step; it < config.iterations; ++it) {
        const auto epoch = static_cast<std::uint32_t>(it);
        const rng::StreamKey init_key{config.seed, rng::Stream::TrainInit, epoch};
        const rng::StreamKey noise_key{config.seed, rng::Stream::TrainPath, epoch};
        const HessianStrategy strategy = default_hessian_strategy(
            problem.d, rng::StreamKey{config.seed, rng::Stream::Hutchinson, epoch});

        parallel_for(n, workers, [&](int j) {
            RecordingContext& ctx = *contexts[static_cast<std::size_t>(j)];
            ctx.reset();
            const VectorXd z0 =
                sample_initial_one(problem, init_key, static_cast<std::uint32_t>(j));
            const TrajectoryLossNodes nodes = record_trajectory_loss(
                ctx, problem, config.grid, config.weights, config.policy, z0, noise_key,
                static_cast<std::uint32_t>(j), config.backprop_through_dynamics, strategy);
            auto term = [&](ad::NodeId id) {
                return id == ad::kNoNode ? 0.0 : ctx.tape().scalar(id);
            };
            auto& part = parts[static_cast<std::size_t>(j)];
            part.bsde = term(nodes.bsde);
            part.hjb = term(nodes.hjb);
            part.obj = term(nodes.obj);
            part.term_val = term(nodes.term_val);
            part.term_grad = term(nodes.term_grad);
            part.total = term(nodes.total);
            ctx.gradient_into(nodes.total, grads[static_cast<std::size_t>(j)]);
        });

        LossBreakdown mean;
        VectorXd grad = VectorXd::Zero(result.model.theta.size());
        for (int j = 0; j < n; ++j) {
            mean.bsde += parts[j].bsde;
            mean.hjb += parts[j].hjb;
            mean.obj += parts[j].obj;
            mean.term_val += parts[j].term_val;
            mean.term_grad += parts[j].term_grad;
            mean.total += parts[j].total;
            grad += grads[static_cast<std::size_t>(j)];
        }
        const double inv_n = 1.0 / n;
        mean.bsde *= inv_n;
        mean.hjb *= inv_n;
        mean.obj *= inv_n;
        mean.term_val *= inv_n;
        mean.term_grad *= inv_n;
        mean.total *= inv_n;
        grad *= inv_n;

        if (!std::isfinite(mean.total) || !grad.allFinite())
            throw std::runtime_error("training aborted: non-finite loss or gradient at iteration " +
                                     std::to_string(it) + "; last checkpoint retained");
        if (config.grad_clip > 0.0) {
            const double norm = grad.norm();
            if (norm > config.grad_clip) grad *= config.grad_clip / norm;
        }

        const double lr = config.lr.rate_at(it);
        adam_step(result.adam, result.model.theta, grad, lr);

        LogRow row;
        row.iteration = it + 1;
        row.lr = lr;
        row.loss = mean;
        row.wallclock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.log.rows.push_back(row);
        if (logs) logs->write_row(row);

        const std::int64_t done = it + 1;
        if (config.eval_every > 0 && done % config.eval_every == 0) {
            const MetricsRow metrics = evaluate_hook(result.model, problem, config.grid,
                                                     config.eval, config.seed, done, workers);
            result.log.metrics.push_back(metrics);
            if (logs) logs->write_metrics(metrics);
        }
        if (!config.out_dir.empty() && config.checkpoint_every > 0 &&
            done % config.checkpoint_every == 0 && done != config.iterations)
            write_checkpoint_file(result.model, result.adam, config.seed, done, config.out_dir);
    }

    if (!config.out_dir.empty())
        write_checkpoint_file(result.model, result.adam, config.seed, config.iterations,
                              config.out_dir);
    return result;
}

TrainResult train(const TrainConfig& config, const SocProblem& problem,
                  const Architecture& arch) {
    ValueModel model = ValueModel::init(arch, problem.d, config.seed);
    AdamState adam = AdamState::zeros(model.theta.size());
    return train_continue(config, problem, std::move(model), std::move(adam));
}

}  // namespace hjb
