#include "hjb/model_eval.hpp"

#include <stdexcept>
#include <vector>

namespace hjb {

namespace {

using Eigen::VectorXd;

VectorXd stack_input(const ValueModel& model, const InputPoint& point) {
    if (point.z.size() != model.d)
        throw std::invalid_argument("eval: point dimension " + std::to_string(point.z.size()) +
                                    " does not match model d=" + std::to_string(model.d));
    VectorXd y(model.d + 1);
    y[0] = point.s;
    y.tail(model.d) = point.z;
    return y;
}

struct BodyTrace {
    std::vector<VectorXd> pre;  // pre-activations per layer
    std::vector<VectorXd> a;    // post-layer states per layer
};

// Forward pass of the body; `trace` keeps per-layer states for the input
// backward sweep.
VectorXd body_forward(const ValueModel& model, const VectorXd& y, BodyTrace* trace) {
    const auto& lay = model.layout;
    const Act act = model.arch.activation;
    const bool res = model.arch.kind == BodyKind::ResNet;
    const int layers = static_cast<int>(lay.K.size());

    VectorXd a;
    for (int i = 0; i < layers; ++i) {
        const VectorXd& in = i == 0 ? y : a;
        VectorXd pre = lay.matrix(model.theta, lay.K[i]) * in + lay.vector(model.theta, lay.b[i]);
        VectorXd out = act_eval(act, pre, 0);
        if (res && i > 0) out += a;
        if (trace) {
            trace->pre.push_back(std::move(pre));
            trace->a.push_back(out);
        }
        a = std::move(out);
    }
    return a;
}

double head_value(const ValueModel& model, const VectorXd& y) {
    if (!model.arch.use_quadratic_head) return 0.0;
    const auto& lay = model.layout;
    const VectorXd ay = lay.matrix(model.theta, lay.A) * y;
    return 0.5 * ay.squaredNorm() + lay.vector(model.theta, lay.head_b).dot(y) +
           model.theta[lay.head_c.offset];
}

}  // namespace

HessianStrategy default_hessian_strategy(int d, rng::StreamKey key) {
    if (d <= 20) return HessianStrategy::exact();
    return HessianStrategy::hutchinson(8, key);
}

Eigen::VectorXd rademacher_probe(const rng::StreamKey& key, int probe, int d) {
    // Probe index lives in the block word so (a, b, c) stay with the caller.
    if (d > 128) throw std::invalid_argument("Hutchinson probes support d <= 128");
    VectorXd v(d);
    for (int i = 0; i < d; i += 2) {
        const auto u =
            rng::uniform_pair(key, static_cast<std::uint32_t>(probe) * 64u +
                                       static_cast<std::uint32_t>(i / 2));
        v[i] = u[0] < 0.5 ? -1.0 : 1.0;
        if (i + 1 < d) v[i + 1] = u[1] < 0.5 ? -1.0 : 1.0;
    }
    return v;
}

double eval_value(const ValueModel& model, const InputPoint& point) {
    const VectorXd y = stack_input(model, point);
    const VectorXd body = body_forward(model, y, nullptr);
    return model.layout.vector(model.theta, model.layout.w).dot(body) + head_value(model, y);
}

EvalRecord eval_first_order(const ValueModel& model, const InputPoint& point) {
    const VectorXd y = stack_input(model, point);
    const auto& lay = model.layout;
    const Act act = model.arch.activation;
    const bool res = model.arch.kind == BodyKind::ResNet;
    const int layers = static_cast<int>(lay.K.size());

    BodyTrace trace;
    trace.pre.reserve(layers);
    trace.a.reserve(layers);
    const VectorXd body = body_forward(model, y, &trace);

    EvalRecord rec;
    rec.value = lay.vector(model.theta, lay.w).dot(body) + head_value(model, y);

    // Reverse sweep over the inputs: delta_i = dPhi / d a_i.
    VectorXd delta = lay.vector(model.theta, lay.w);
    for (int i = layers - 1; i >= 1; --i) {
        const VectorXd gated = act_eval(act, trace.pre[i], 1).cwiseProduct(delta);
        VectorXd down = lay.matrix(model.theta, lay.K[i]).transpose() * gated;
        if (res) down += delta;
        delta = std::move(down);
    }
    const VectorXd gated0 = act_eval(act, trace.pre[0], 1).cwiseProduct(delta);
    VectorXd grad_y = lay.matrix(model.theta, lay.K[0]).transpose() * gated0;
    if (model.arch.use_quadratic_head) {
        const auto A = lay.matrix(model.theta, lay.A);
        grad_y += A.transpose() * (A * y);
        grad_y += lay.vector(model.theta, lay.head_b);
    }

    rec.time_partial = grad_y[0];
    rec.state_grad = grad_y.tail(model.d);
    return rec;
}

double directional_second_derivative(const ValueModel& model, const InputPoint& point,
                                     const Eigen::VectorXd& direction_y) {
    const VectorXd y = stack_input(model, point);
    if (direction_y.size() != y.size())
        throw std::invalid_argument("direction dimension must be d+1");
    const auto& lay = model.layout;
    const Act act = model.arch.activation;
    const bool res = model.arch.kind == BodyKind::ResNet;
    const int layers = static_cast<int>(lay.K.size());

    // Second-order Taylor coefficients of a(y + t v) in t.
    VectorXd a, a_t, a_tt;
    for (int i = 0; i < layers; ++i) {
        const auto K = lay.matrix(model.theta, lay.K[i]);
        VectorXd pre, pre_t, pre_tt;
        if (i == 0) {
            pre = K * y + lay.vector(model.theta, lay.b[i]);
            pre_t = K * direction_y;
            pre_tt = VectorXd::Zero(K.rows());
        } else {
            pre = K * a + lay.vector(model.theta, lay.b[i]);
            pre_t = K * a_t;
            pre_tt = K * a_tt;
        }
        const VectorXd d1 = act_eval(act, pre, 1);
        VectorXd out = act_eval(act, pre, 0);
        VectorXd out_t = d1.cwiseProduct(pre_t);
        VectorXd out_tt = act_eval(act, pre, 2).cwiseProduct(pre_t.cwiseProduct(pre_t)) +
                          d1.cwiseProduct(pre_tt);
        if (res && i > 0) {
            out += a;
            out_t += a_t;
            out_tt += a_tt;
        }
        a = std::move(out);
        a_t = std::move(out_t);
        a_tt = std::move(out_tt);
    }

    double dd = lay.vector(model.theta, lay.w).dot(a_tt);
    if (model.arch.use_quadratic_head)
        dd += (lay.matrix(model.theta, lay.A) * direction_y).squaredNorm();
    return dd;
}

double eval_hessian_trace(const ValueModel& model, const InputPoint& point,
                          const DiffusionEval& sigma, const HessianStrategy& strategy) {
    const int d = model.d;
    VectorXd dir_y = VectorXd::Zero(d + 1);
    if (strategy.kind == HessianStrategy::Kind::Exact) {
        // tr(sigma sigma' H) = sum_j c_j' H c_j over the columns of sigma.
        double trace = 0.0;
        for (int j = 0; j < d; ++j) {
            dir_y.tail(d) = sigma.column(d, j);
            trace += directional_second_derivative(model, point, dir_y);
        }
        return trace;
    }
    if (strategy.probes < 1)
        throw std::invalid_argument("Hutchinson estimator needs at least one probe");
    double acc = 0.0;
    for (int k = 0; k < strategy.probes; ++k) {
        // Rademacher probe v; E[(sigma v)' H (sigma v)] = tr(sigma sigma' H).
        dir_y.tail(d) = sigma.apply(rademacher_probe(strategy.key, k, d));
        acc += directional_second_derivative(model, point, dir_y);
    }
    return acc * (1.0 / strategy.probes);
}

}  // namespace hjb
