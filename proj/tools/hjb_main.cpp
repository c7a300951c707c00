#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hjb/config.hpp"
#include "hjb/trainer.hpp"

namespace fs = std::filesystem;
using namespace hjb;

namespace {

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list of numbers");
    return out;
}

std::uint64_t fnv1a(const Eigen::VectorXd& z) {
    std::uint64_t h = 1469598103934665603ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(z.data());
    for (Eigen::Index i = 0; i < z.size() * static_cast<Eigen::Index>(sizeof(double)); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

Eigen::VectorXd mean_final_state(const ValueModel& model, const SocProblem& problem,
                                 const TimeGrid& grid, int n_rollouts, std::uint64_t seed,
                                 std::uint32_t epoch) {
    const TrajectoryBatch batch =
        rollout(model, problem, grid, n_rollouts, DriftPolicy::PmpFeedback,
                rng::StreamKey{seed, rng::Stream::EvalInit, epoch},
                rng::StreamKey{seed, rng::Stream::EvalPath, epoch}, 0);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(problem.d);
    for (int j = 0; j < batch.size(); ++j) mean += batch.Z[j].col(grid.steps);
    return mean / batch.size();
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              bool seed_given, std::uint64_t seed) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_given) cfg.seed = seed;
    write_resolved_config(cfg, cfg.out_dir);
    const SocProblem problem = cfg.make_problem();
    train(cfg.make_train_config(), problem, cfg.arch);
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::string& out_override, bool dump_trajectories) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    write_resolved_config(cfg, cfg.out_dir);
    const SocProblem problem = cfg.make_problem();
    const TimeGrid grid = cfg.make_grid();

    CheckpointExtras extras;
    const ValueModel model = load_checkpoint(checkpoint_path, &extras);
    if (model.d != problem.d)
        throw std::invalid_argument("checkpoint dimension does not match the configured problem");
    const std::int64_t iteration = extras.rng_iteration.value_or(extras.adam_step.value_or(0));

    const MetricsRow row = evaluate_hook(model, problem, grid, cfg.eval, cfg.seed, iteration, 0);
    std::ofstream metrics(fs::path(cfg.out_dir) / "metrics.csv", std::ios::binary);
    metrics << "iteration,j_mean,j_stderr,re,re0\n";
    metrics << row.iteration << ',' << format_csv_double(row.j_mean) << ','
            << format_csv_double(row.j_stderr) << ','
            << (row.re ? format_csv_double(*row.re) : std::string()) << ','
            << (row.re0 ? format_csv_double(*row.re0) : std::string()) << '\n';
    std::cout << "j_mean=" << row.j_mean << " j_stderr=" << row.j_stderr;
    if (row.re) std::cout << " re=" << *row.re << " re0=" << *row.re0;
    std::cout << '\n';

    if (dump_trajectories) {
        const auto epoch = static_cast<std::uint32_t>(iteration);
        const TrajectoryBatch batch =
            rollout(model, problem, grid, cfg.eval.n_rollouts, DriftPolicy::PmpFeedback,
                    rng::StreamKey{cfg.seed, rng::Stream::EvalInit, epoch},
                    rng::StreamKey{cfg.seed, rng::Stream::EvalPath, epoch}, 0);
        std::ofstream dump(fs::path(cfg.out_dir) / "trajectories.csv", std::ios::binary);
        dump << "traj,step,s";
        for (int j = 0; j < problem.d; ++j) dump << ",z_" << (j + 1);
        for (int j = 0; j < problem.k; ++j) dump << ",u_" << (j + 1);
        dump << '\n';
        for (int t = 0; t < batch.size(); ++t) {
            for (int i = 0; i <= grid.steps; ++i) {
                dump << t << ',' << i << ',' << format_csv_double(grid.time_at(i));
                for (int j = 0; j < problem.d; ++j)
                    dump << ',' << format_csv_double(batch.Z[t](j, i));
                Eigen::VectorXd u;
                if (i < grid.steps) {
                    u = batch.U[t].col(i);
                } else {
                    const EvalRecord rec =
                        eval_first_order(model, {grid.time_at(i), batch.Z[t].col(i)});
                    u = problem.feedback(grid.time_at(i), batch.Z[t].col(i), -rec.state_grad);
                }
                for (int j = 0; j < problem.k; ++j) dump << ',' << format_csv_double(u[j]);
                dump << '\n';
            }
        }
    }
    return 0;
}

int cmd_histogram(const std::string& checkpoint_path, const std::string& config_path,
                  const std::string& out_override, const std::vector<int>& axes,
                  const std::string& slices_text, int bins, double range_lo, double range_hi) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    write_resolved_config(cfg, cfg.out_dir);
    const SocProblem problem = cfg.make_problem();
    const TimeGrid grid = cfg.make_grid();
    const ValueModel model = load_checkpoint(checkpoint_path);
    const std::vector<double> slices = parse_double_list(slices_text);

    const TrajectoryBatch batch =
        rollout(model, problem, grid, cfg.eval.n_rollouts, cfg.policy,
                rng::StreamKey{cfg.seed, rng::Stream::EvalInit, 0},
                rng::StreamKey{cfg.seed, rng::Stream::EvalPath, 0}, 0);
    const VisitHistogram hist =
        accumulate_histogram({batch}, axes.at(0), axes.at(1), bins, slices, range_lo, range_hi);
    write_histogram_csv(hist, cfg.out_dir);
    return 0;
}

int cmd_compare_sampling(const std::string& config_path, const std::string& out_override,
                         int repeats) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    write_resolved_config(cfg, cfg.out_dir);
    if (cfg.eval_every <= 0) cfg.eval_every = std::max<std::int64_t>(cfg.iterations / 10, 1);

    struct Arm {
        DriftPolicy policy;
        const char* name;
    };
    const Arm arms[] = {{DriftPolicy::PmpFeedback, "pmp"}, {DriftPolicy::ZeroDrift, "zero"}};

    // metric curves per arm: [repeat][row]
    std::vector<std::vector<MetricsRow>> curves[2];
    std::ofstream summary(fs::path(cfg.out_dir) / "compare_summary.csv", std::ios::binary);
    summary << "arm,repeat,final_j_mean,final_j_stderr,final_state_max_dev\n";

    for (int r = 0; r < repeats; ++r) {
        for (int a = 0; a < 2; ++a) {
            ExperimentConfig run = cfg;
            run.policy = arms[a].policy;
            run.seed = cfg.seed + static_cast<std::uint64_t>(r);  // paired across arms
            run.out_dir =
                (fs::path(cfg.out_dir) / (std::string(arms[a].name) + "_" + std::to_string(r)))
                    .string();
            write_resolved_config(run, run.out_dir);
            const SocProblem problem = run.make_problem();
            const TrainResult result =
                train(run.make_train_config(), problem, run.arch);
            curves[a].push_back(result.log.metrics);

            const Eigen::VectorXd mean_final =
                mean_final_state(result.model, problem, run.make_grid(), run.eval.n_rollouts,
                                 run.seed, static_cast<std::uint32_t>(run.iterations));
            const double dev =
                (mean_final - problem.target).lpNorm<Eigen::Infinity>();
            const MetricsRow& last = result.log.metrics.back();
            summary << arms[a].name << ',' << r << ',' << format_csv_double(last.j_mean) << ','
                    << format_csv_double(last.j_stderr) << ',' << format_csv_double(dev)
                    << '\n';
            summary.flush();
        }
    }

    // mean J per eval iteration across repeats, one curve per arm
    std::ofstream out(fs::path(cfg.out_dir) / "compare_j_curves.csv", std::ios::binary);
    out << "iteration,j_pmp,j_zero\n";
    const std::size_t rows = curves[0].front().size();
    for (std::size_t i = 0; i < rows; ++i) {
        double mean_arm[2] = {0.0, 0.0};
        for (int a = 0; a < 2; ++a) {
            for (int r = 0; r < repeats; ++r) mean_arm[a] += curves[a][r][i].j_mean;
            mean_arm[a] /= repeats;
        }
        out << curves[0][0][i].iteration << ',' << format_csv_double(mean_arm[0]) << ','
            << format_csv_double(mean_arm[1]) << '\n';
    }
    return 0;
}

int cmd_scaling(const std::string& config_path, const std::string& out_override,
                const std::string& dims_text) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    write_resolved_config(cfg, cfg.out_dir);
    const std::vector<double> dims = parse_double_list(dims_text);

    std::ofstream table(fs::path(cfg.out_dir) / "scaling_table.csv", std::ios::binary);
    table << "dimension,width,param_count,achieved_distance\n";
    for (double dim_value : dims) {
        const int dim = static_cast<int>(dim_value);
        for (int width = 16; width <= 1024; width *= 2) {
            ExperimentConfig run = cfg;
            run.d = dim;
            run.target = Eigen::VectorXd::Constant(dim, cfg.target.size() > 0 ? cfg.target[0]
                                                                              : 0.0);
            run.arch.width = width;
            run.arch.quad_rank = 0;  // re-resolve min(10, d+1)
            run.out_dir.clear();
            const SocProblem problem = run.make_problem();
            TrainConfig tc = run.make_train_config();
            tc.out_dir.clear();
            const TrainResult result = train(tc, problem, run.arch);
            const Eigen::VectorXd mean_final =
                mean_final_state(result.model, problem, run.make_grid(), run.eval.n_rollouts,
                                 run.seed, static_cast<std::uint32_t>(run.iterations));
            const double dev = (mean_final - problem.target).lpNorm<Eigen::Infinity>();
            const bool ok = dev <= cfg.scaling_tolerance;
            if (ok || width == 1024) {
                table << dim << ',' << width << ',' << param_count(run.arch, dim) << ','
                      << format_csv_double(dev) << '\n';
                table.flush();
                break;
            }
        }
    }
    return 0;
}

int cmd_oracle(const std::string& config_path, const std::string& out_override, int n_points,
               long samples) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    write_resolved_config(cfg, cfg.out_dir);
    const SocProblem problem = cfg.make_problem();
    if (samples <= 0) samples = cfg.eval.oracle_samples;

    std::ofstream out(fs::path(cfg.out_dir) / "oracle.csv", std::ios::binary);
    out << "s,z_hash,value,stderr,n_samples\n";
    for (int i = 0; i < n_points; ++i) {
        const rng::StreamKey pkey{cfg.seed, rng::Stream::Generic,
                                  static_cast<std::uint32_t>(i)};
        const double s = cfg.t0 + (cfg.T - cfg.t0) *
                                      rng::uniform_pair(pkey, 0)[0];
        const Eigen::VectorXd z =
            problem.target + rng::gaussian_vector(pkey.with(pkey.a, 1), problem.d);
        const OracleEstimate est = cole_hopf_value(
            problem, s, z, samples,
            rng::StreamKey{cfg.seed, rng::Stream::Oracle, static_cast<std::uint32_t>(i), 0});
        std::ostringstream hash;
        hash << std::hex << fnv1a(z);
        out << format_csv_double(s) << ',' << hash.str() << ',' << format_csv_double(est.value)
            << ',' << format_csv_double(est.stderr_) << ',' << est.n_samples << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural value-function solver for stochastic optimal control"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, slices_text = "1.0", dims_text;
    std::uint64_t seed = 0;
    bool dump_trajectories = false;
    std::vector<int> axes{0, 1};
    int bins = 40;
    int repeats = 3;
    int n_points = 16;
    long samples = 0;
    std::vector<double> range{-4.0, 4.0};

    auto* train_cmd = app.add_subcommand("train", "train a value model from a config");
    train_cmd->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--out", out_dir, "output directory (overrides output.dir)");
    auto* seed_opt = train_cmd->add_option("--seed", seed, "seed override");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", out_dir, "output directory");
    eval_cmd->add_flag("--dump-trajectories", dump_trajectories,
                       "also write evaluation trajectories as CSV");

    auto* hist_cmd = app.add_subcommand("histogram", "state-visit histograms of a checkpoint");
    hist_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")
        ->required()
        ->check(CLI::ExistingFile);
    hist_cmd->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    hist_cmd->add_option("--axes", axes, "state axes i j")->expected(2);
    hist_cmd->add_option("--slices", slices_text, "comma-separated slice times");
    hist_cmd->add_option("--bins", bins, "bins per axis");
    hist_cmd->add_option("--range", range, "histogram range lo hi")->expected(2);
    hist_cmd->add_option("--out", out_dir, "output directory");

    auto* cmp_cmd = app.add_subcommand(
        "compare-sampling", "paired feedback-vs-random-walk training runs");
    cmp_cmd->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    cmp_cmd->add_option("--out", out_dir, "output directory");
    cmp_cmd->add_option("--repeats", repeats, "paired repeats");

    auto* scale_cmd = app.add_subcommand("scaling", "width-vs-dimension sweep");
    scale_cmd->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    scale_cmd->add_option("--dims", dims_text, "comma-separated dimensions")->required();
    scale_cmd->add_option("--out", out_dir, "output directory");

    auto* oracle_cmd = app.add_subcommand("oracle", "Cole-Hopf oracle queries");
    oracle_cmd->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    oracle_cmd->add_option("--out", out_dir, "output directory");
    oracle_cmd->add_option("--n-points", n_points, "number of query points");
    oracle_cmd->add_option("--samples", samples, "MC samples per point");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed())
            return cmd_train(config_path, out_dir, seed_opt->count() > 0, seed);
        if (eval_cmd->parsed())
            return cmd_eval(checkpoint_path, config_path, out_dir, dump_trajectories);
        if (hist_cmd->parsed())
            return cmd_histogram(checkpoint_path, config_path, out_dir, axes, slices_text, bins,
                                 range[0], range[1]);
        if (cmp_cmd->parsed()) return cmd_compare_sampling(config_path, out_dir, repeats);
        if (scale_cmd->parsed()) return cmd_scaling(config_path, out_dir, dims_text);
        if (oracle_cmd->parsed()) return cmd_oracle(config_path, out_dir, n_points, samples);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
