#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "hjb/diff_engine.hpp"
#include "hjb/model_eval.hpp"
#include "hjb/philox.hpp"

namespace hjb {

// Initial-state law rho: a point mass or a Gaussian.
struct InitialDistribution {
    Eigen::VectorXd mean;
    std::optional<Eigen::MatrixXd> covariance;  // absent => Dirac

    bool is_dirac() const { return !covariance.has_value(); }
};

// One stochastic optimal control problem: dynamics dz = f ds + sigma dW,
// costs (L, G), the closed-form PMP feedback u*(s, z, p), and rho. The *_t
// callbacks record the same maps on a tape; the diffusion is treated as
// state-independent there (true for every instance here).
struct SocProblem {
    std::string name;
    int d = 0;
    int k = 0;
    double t0 = 0.0;
    double T = 1.0;

    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)> drift;
    std::function<DiffusionEval(double, const Eigen::VectorXd&)> diffusion;
    std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)> running_cost;
    std::function<double(const Eigen::VectorXd&)> terminal_cost;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> terminal_grad;
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>
        feedback;
    InitialDistribution rho;

    std::function<ad::NodeId(ad::Tape&, double, ad::NodeId, ad::NodeId)> drift_t;
    std::function<ad::NodeId(ad::Tape&, double, ad::NodeId, ad::NodeId)> running_cost_t;
    std::function<ad::NodeId(ad::Tape&, ad::NodeId)> terminal_cost_t;
    std::function<ad::NodeId(ad::Tape&, ad::NodeId)> terminal_grad_t;
    std::function<ad::NodeId(ad::Tape&, double, ad::NodeId, ad::NodeId)> feedback_t;

    // Cole-Hopf oracle applicability (f = 2u, L = |u|^2, constant scalar sigma).
    bool benchmark_family = false;
    double sigma_scalar = 0.0;
    double terminal_scale = 1.0;
    Eigen::VectorXd target;
};

// u*(s, z, p), the argmax of the generalized Hamiltonian over controls.
Eigen::VectorXd feedback_control(const SocProblem& problem, double s, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& p);

// H(s, z, -grad, -sigma' Hess) evaluated from grad = grad_z Phi and
// hess_trace_w = tr(sigma sigma' Hess_z Phi):
//   H = -hess_trace_w / 2 + p . f(s, z, u*) - L(s, z, u*)  with p = -grad.
double hamiltonian_residual(const SocProblem& problem, double s, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& grad, double hess_trace_w);

// Tape version; grad and hess_trace_w are nodes, the result is a scalar node.
ad::NodeId hamiltonian_residual_t(ad::Tape& tape, const SocProblem& problem, double s,
                                  ad::NodeId z, ad::NodeId grad, ad::NodeId hess_trace_w);

// n i.i.d. draws from rho, keyed by (key, draw index).
std::vector<Eigen::VectorXd> sample_initial(const SocProblem& problem, const rng::StreamKey& key,
                                            int n);
Eigen::VectorXd sample_initial_one(const SocProblem& problem, const rng::StreamKey& key,
                                   std::uint32_t index);

// The 2D trajectory-planning cost hill 50 exp(-|z|^2 / 0.8).
double obstacle_cost(const Eigen::VectorXd& z);

// Problem factories. Overridable fields default to the paper values.
SocProblem make_trajectory2d(double sigma = 0.5, double t0 = 0.0, double T = 1.0,
                             double terminal_scale = 50.0,
                             const Eigen::VectorXd& target = Eigen::Vector2d(1.5, 1.5));
SocProblem make_benchmark(int d, double sigma, double terminal_scale,
                          const Eigen::VectorXd& target, double T = 1.0);
SocProblem make_benchmark_original(int d);          // sigma = sqrt(2), target 0
SocProblem make_benchmark_shifted(int d);           // sigma = 2 sqrt(2)/5, 1000 ln(...), target 3
SocProblem make_problem_by_name(const std::string& name, int d);

}  // namespace hjb
