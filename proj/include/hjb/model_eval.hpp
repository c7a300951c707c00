#pragma once

#include <optional>

#include <Eigen/Core>

#include "hjb/philox.hpp"
#include "hjb/value_model.hpp"

namespace hjb {

struct InputPoint {
    double s = 0.0;
    Eigen::VectorXd z;
};

// Phi and the input derivatives requested by the caller. time_partial and
// state_grad are exact (analytic propagation, no finite differencing).
struct EvalRecord {
    double value = 0.0;
    double time_partial = 0.0;
    Eigen::VectorXd state_grad;
    std::optional<double> hess_trace;  // tr(sigma sigma' Hess_z Phi)
};

// Diffusion evaluated at one (s, z). All paper instances are a constant
// scalar; the matrix branch keeps the interface general.
struct DiffusionEval {
    double scalar = 0.0;
    std::optional<Eigen::MatrixXd> matrix;

    bool is_scalar() const { return !matrix.has_value(); }
    // sigma * v
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
        return matrix ? Eigen::VectorXd(*matrix * v) : Eigen::VectorXd(scalar * v);
    }
    // sigma' * v
    Eigen::VectorXd apply_transpose(const Eigen::VectorXd& v) const {
        return matrix ? Eigen::VectorXd(matrix->transpose() * v) : Eigen::VectorXd(scalar * v);
    }
    // j-th column of sigma, the direction used for the exact trace.
    Eigen::VectorXd column(int d, int j) const {
        if (matrix) return matrix->col(j);
        return scalar * Eigen::VectorXd::Unit(d, j);
    }
};

struct HessianStrategy {
    enum class Kind { Exact, Hutchinson };
    Kind kind = Kind::Exact;
    int probes = 8;
    rng::StreamKey key;  // probe stream for Hutchinson

    static HessianStrategy exact() { return {}; }
    static HessianStrategy hutchinson(int probes, rng::StreamKey key) {
        return {Kind::Hutchinson, probes, key};
    }
};

// Exact traces stay affordable up to moderate d; past that the HJB penalty is
// either disabled or estimated.
HessianStrategy default_hessian_strategy(int d, rng::StreamKey key);

double eval_value(const ValueModel& model, const InputPoint& point);

EvalRecord eval_first_order(const ValueModel& model, const InputPoint& point);

double eval_hessian_trace(const ValueModel& model, const InputPoint& point,
                          const DiffusionEval& sigma, const HessianStrategy& strategy);

// Directional second derivative v' Hess_y Phi v for a direction in (s, z) space.
double directional_second_derivative(const ValueModel& model, const InputPoint& point,
                                     const Eigen::VectorXd& direction_y);

// Rademacher probe shared by the plain and taped Hutchinson estimators.
Eigen::VectorXd rademacher_probe(const rng::StreamKey& key, int probe, int d);

}  // namespace hjb
