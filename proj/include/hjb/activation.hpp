#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace hjb {

enum class Act { Tanh, LogCosh, Sin };

// f, f', f'', f''' for each activation. Order 3 is only consumed by the tape
// when back-propagating through a second-derivative node.
inline double act_eval(Act act, double x, int order) {
    switch (act) {
        case Act::Tanh: {
            const double t = std::tanh(x);
            switch (order) {
                case 0: return t;
                case 1: return 1.0 - t * t;
                case 2: return -2.0 * t * (1.0 - t * t);
                case 3: return -2.0 * (1.0 - t * t) * (1.0 - 3.0 * t * t);
                default: break;
            }
            break;
        }
        case Act::LogCosh: {
            // log cosh(x) = |x| + log1p(exp(-2|x|)) - log 2, stable for large |x|.
            const double t = std::tanh(x);
            switch (order) {
                case 0: return std::abs(x) + std::log1p(std::exp(-2.0 * std::abs(x))) - M_LN2;
                case 1: return t;
                case 2: return 1.0 - t * t;
                case 3: return -2.0 * t * (1.0 - t * t);
                default: break;
            }
            break;
        }
        case Act::Sin: {
            switch (order) {
                case 0: return std::sin(x);
                case 1: return std::cos(x);
                case 2: return -std::sin(x);
                case 3: return -std::cos(x);
                default: break;
            }
            break;
        }
    }
    throw std::invalid_argument("act_eval: derivative order must be in [0, 3]");
}

inline Eigen::VectorXd act_eval(Act act, const Eigen::VectorXd& x, int order) {
    Eigen::VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = act_eval(act, x[i], order);
    return out;
}

const char* act_name(Act act);
Act act_from_name(const std::string& name);

}  // namespace hjb
