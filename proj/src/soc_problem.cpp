#include "hjb/soc_problem.hpp"

#include <cmath>
#include <stdexcept>

namespace hjb {

using Eigen::VectorXd;

Eigen::VectorXd feedback_control(const SocProblem& problem, double s, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& p) {
    return problem.feedback(s, z, p);
}

double hamiltonian_residual(const SocProblem& problem, double s, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& grad, double hess_trace_w) {
    const VectorXd p = -grad;
    const VectorXd u = problem.feedback(s, z, p);
    return -0.5 * hess_trace_w + p.dot(problem.drift(s, z, u)) - problem.running_cost(s, z, u);
}

ad::NodeId hamiltonian_residual_t(ad::Tape& tape, const SocProblem& problem, double s,
                                  ad::NodeId z, ad::NodeId grad, ad::NodeId hess_trace_w) {
    const ad::NodeId p = tape.scale(grad, -1.0);
    const ad::NodeId u = problem.feedback_t(tape, s, z, p);
    const ad::NodeId pf = tape.dot(p, problem.drift_t(tape, s, z, u));
    const ad::NodeId l = problem.running_cost_t(tape, s, z, u);
    return tape.add(tape.scale(hess_trace_w, -0.5), tape.sub(pf, l));
}

Eigen::VectorXd sample_initial_one(const SocProblem& problem, const rng::StreamKey& key,
                                   std::uint32_t index) {
    if (problem.rho.is_dirac()) return problem.rho.mean;
    const VectorXd xi = rng::gaussian_vector(key.with(key.a, index), problem.d);
    const Eigen::MatrixXd L = problem.rho.covariance->llt().matrixL();
    return problem.rho.mean + L * xi;
}

std::vector<Eigen::VectorXd> sample_initial(const SocProblem& problem, const rng::StreamKey& key,
                                            int n) {
    if (n < 1) throw std::invalid_argument("sample_initial: n must be >= 1");
    std::vector<VectorXd> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(sample_initial_one(problem, key, static_cast<std::uint32_t>(i)));
    return out;
}

double obstacle_cost(const Eigen::VectorXd& z) {
    return 50.0 * std::exp(-z.squaredNorm() / 0.8);
}

SocProblem make_trajectory2d(double sigma, double t0, double T, double terminal_scale,
                             const Eigen::VectorXd& target) {
    if (target.size() != 2) throw std::invalid_argument("trajectory2d target must be 2D");
    SocProblem p;
    p.name = "trajectory2d";
    p.d = 2;
    p.k = 2;
    p.t0 = t0;
    p.T = T;
    p.sigma_scalar = sigma;
    p.terminal_scale = terminal_scale;
    const VectorXd x_target = target;
    p.target = x_target;

    p.drift = [](double, const VectorXd&, const VectorXd& u) { return u; };
    p.diffusion = [sigma](double, const VectorXd&) { return DiffusionEval{sigma, {}}; };
    p.running_cost = [](double, const VectorXd& z, const VectorXd& u) {
        return 0.5 * u.squaredNorm() + obstacle_cost(z);
    };
    p.terminal_cost = [x_target, terminal_scale](const VectorXd& z) {
        return terminal_scale * (z - x_target).squaredNorm();
    };
    p.terminal_grad = [x_target, terminal_scale](const VectorXd& z) {
        return VectorXd(2.0 * terminal_scale * (z - x_target));
    };
    p.feedback = [](double, const VectorXd&, const VectorXd& padj) { return padj; };
    p.rho.mean = Eigen::Vector2d(-1.5, -1.5);
    p.rho.covariance = Eigen::MatrixXd::Identity(2, 2);

    p.drift_t = [](ad::Tape&, double, ad::NodeId, ad::NodeId u) { return u; };
    p.running_cost_t = [](ad::Tape& t, double, ad::NodeId z, ad::NodeId u) {
        const ad::NodeId hill =
            t.scale(t.exp(t.scale(t.square_norm(z), -1.0 / 0.8)), 50.0);
        return t.add(t.scale(t.square_norm(u), 0.5), hill);
    };
    p.terminal_cost_t = [x_target, terminal_scale](ad::Tape& t, ad::NodeId z) {
        return t.scale(t.square_norm(t.add_const(z, -x_target)), terminal_scale);
    };
    p.terminal_grad_t = [x_target, terminal_scale](ad::Tape& t, ad::NodeId z) {
        return t.scale(t.add_const(z, -x_target), 2.0 * terminal_scale);
    };
    p.feedback_t = [](ad::Tape&, double, ad::NodeId, ad::NodeId padj) { return padj; };
    return p;
}

SocProblem make_benchmark(int d, double sigma, double terminal_scale,
                          const Eigen::VectorXd& target, double T) {
    if (target.size() != d) throw std::invalid_argument("benchmark target dimension mismatch");
    SocProblem p;
    p.name = "benchmark";
    p.d = d;
    p.k = d;
    p.t0 = 0.0;
    p.T = T;
    p.benchmark_family = true;
    p.sigma_scalar = sigma;
    p.terminal_scale = terminal_scale;
    p.target = target;

    p.drift = [](double, const VectorXd&, const VectorXd& u) { return VectorXd(2.0 * u); };
    p.diffusion = [sigma](double, const VectorXd&) { return DiffusionEval{sigma, {}}; };
    p.running_cost = [](double, const VectorXd&, const VectorXd& u) { return u.squaredNorm(); };
    p.terminal_cost = [target, terminal_scale](const VectorXd& z) {
        return terminal_scale * std::log(0.5 * (1.0 + (z - target).squaredNorm()));
    };
    p.terminal_grad = [target, terminal_scale](const VectorXd& z) {
        const VectorXd diff = z - target;
        return VectorXd(terminal_scale * 2.0 * diff / (1.0 + diff.squaredNorm()));
    };
    p.feedback = [](double, const VectorXd&, const VectorXd& padj) { return padj; };
    p.rho.mean = VectorXd::Zero(d);

    p.drift_t = [](ad::Tape& t, double, ad::NodeId, ad::NodeId u) { return t.scale(u, 2.0); };
    p.running_cost_t = [](ad::Tape& t, double, ad::NodeId, ad::NodeId u) {
        return t.square_norm(u);
    };
    p.terminal_cost_t = [target, terminal_scale](ad::Tape& t, ad::NodeId z) {
        const ad::NodeId sn = t.square_norm(t.add_const(z, -target));
        return t.scale(t.log(t.scale(t.add_const(sn, Eigen::VectorXd::Ones(1)), 0.5)),
                       terminal_scale);
    };
    p.terminal_grad_t = [target, terminal_scale](ad::Tape& t, ad::NodeId z) {
        const ad::NodeId diff = t.add_const(z, -target);
        const ad::NodeId denom = t.add_const(t.square_norm(diff), Eigen::VectorXd::Ones(1));
        return t.scalar_vec_mul(t.inv(denom), t.scale(diff, 2.0 * terminal_scale));
    };
    p.feedback_t = [](ad::Tape&, double, ad::NodeId, ad::NodeId padj) { return padj; };
    return p;
}

SocProblem make_benchmark_original(int d) {
    return make_benchmark(d, std::sqrt(2.0), 1.0, VectorXd::Zero(d));
}

SocProblem make_benchmark_shifted(int d) {
    SocProblem p = make_benchmark(d, 2.0 * std::sqrt(2.0) / 5.0, 1000.0,
                                  VectorXd::Constant(d, 3.0));
    p.name = "benchmark_shifted";
    return p;
}

SocProblem make_problem_by_name(const std::string& name, int d) {
    if (name == "trajectory2d") {
        if (d != 2 && d != 0)
            throw std::invalid_argument("trajectory2d is a 2-dimensional problem");
        return make_trajectory2d();
    }
    if (name == "benchmark") return make_benchmark_original(d);
    if (name == "benchmark_shifted") return make_benchmark_shifted(d);
    throw std::invalid_argument("unknown problem '" + name +
                                "' (expected trajectory2d|benchmark|benchmark_shifted)");
}

}  // namespace hjb
