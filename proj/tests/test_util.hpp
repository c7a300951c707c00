#pragma once

#include <functional>

#include "hjb/model_eval.hpp"
#include "hjb/philox.hpp"
#include "hjb/value_model.hpp"

namespace hjb::testutil {

inline ValueModel random_model(BodyKind kind, int d, int width, int depth, Act act, bool head,
                               std::uint64_t seed, double scale = 0.4) {
    Architecture a;
    a.kind = kind;
    a.width = width;
    a.depth = depth;
    a.activation = act;
    a.use_quadratic_head = head;
    ValueModel model = ValueModel::init(a, d, seed);
    model.theta = rng::gaussian_vector({seed, rng::Stream::Generic, 1000},
                                       model.theta.size(), scale);
    return model;
}

// Central finite differences of a scalar functional of theta.
inline Eigen::VectorXd fd_theta_gradient(ValueModel& model,
                                         const std::function<double()>& loss, double h = 1e-5) {
    Eigen::VectorXd grad(model.theta.size());
    for (Eigen::Index i = 0; i < model.theta.size(); ++i) {
        const double keep = model.theta[i];
        model.theta[i] = keep + h;
        const double up = loss();
        model.theta[i] = keep - h;
        const double down = loss();
        model.theta[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Largest relative deviation with an absolute floor for near-zero entries.
inline double max_rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want,
                          double abs_floor = 1e-7) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < got.size(); ++i) {
        const double denom = std::max(std::abs(want[i]), abs_floor);
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    return worst;
}

inline double rel_err(double got, double want, double abs_floor = 1e-7) {
    return std::abs(got - want) / std::max(std::abs(want), abs_floor);
}

}  // namespace hjb::testutil
