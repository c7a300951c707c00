#include "hjb/diff_engine.hpp"

#include <array>
#include <stdexcept>
#include <vector>

namespace hjb {

ModelEvalNodes RecordingContext::record_eval(double s, ad::NodeId z, int order,
                                             const DiffusionEval* sigma,
                                             const HessianStrategy* strategy) {
    if (order < 0 || order > 2)
        throw std::invalid_argument(
            "record_eval: derivatives of order > 2 in z are not supported");
    if (order >= 2 && (sigma == nullptr || strategy == nullptr))
        throw std::invalid_argument("record_eval: order 2 needs a diffusion and a strategy");

    const ValueModel& m = *model_;
    const auto& lay = m.layout;
    const bool res = m.arch.kind == BodyKind::ResNet;
    const Act act = m.arch.activation;
    const int layers = static_cast<int>(lay.K.size());
    const int d = m.d;
    if (tape_.value(z).size() != d)
        throw std::invalid_argument("record_eval: state dimension mismatch");

    ad::Tape& t = tape_;
    const ad::NodeId y = t.concat(t.constant_scalar(s), z);

    // Forward chain; pre-activation ids plus lazily created act-derivative
    // nodes (orders 0..2) per layer, shared between the derivative programs.
    std::vector<ad::NodeId> pre(layers);
    std::vector<std::array<ad::NodeId, 3>> act_nodes(
        layers, {ad::kNoNode, ad::kNoNode, ad::kNoNode});
    auto act_node = [&](int layer, int ord) {
        auto& id = act_nodes[static_cast<size_t>(layer)][static_cast<size_t>(ord)];
        if (id == ad::kNoNode) id = t.act(pre[static_cast<size_t>(layer)], act, ord);
        return id;
    };

    ad::NodeId a = ad::kNoNode;
    for (int i = 0; i < layers; ++i) {
        pre[i] = t.affine(lay.K[i], lay.b[i], i == 0 ? y : a);
        ad::NodeId out = act_node(i, 0);
        if (res && i > 0) out = t.add(out, a);
        a = out;
    }

    ModelEvalNodes nodes;
    ad::NodeId ay = ad::kNoNode;
    nodes.phi = t.dot_param(lay.w, a);
    if (m.arch.use_quadratic_head) {
        ay = t.affine(lay.A, {}, y);
        ad::NodeId head = t.scale(t.square_norm(ay), 0.5);
        head = t.add(head, t.dot_param(lay.head_b, y));
        head = t.add(head, t.param_vector(lay.head_c));
        nodes.phi = t.add(nodes.phi, head);
    }
    if (order == 0) return nodes;

    // Input gradient, recorded as a differentiable program (the reverse sweep
    // over the body written out as forward tape ops).
    ad::NodeId delta = t.param_vector(lay.w);
    for (int i = layers - 1; i >= 1; --i) {
        const ad::NodeId gated = t.hadamard(act_node(i, 1), delta);
        ad::NodeId down = t.mat_t_vec(lay.K[i], gated);
        if (res) down = t.add(down, delta);
        delta = down;
    }
    ad::NodeId grad_y = t.mat_t_vec(lay.K[0], t.hadamard(act_node(0, 1), delta));
    if (m.arch.use_quadratic_head) {
        grad_y = t.add(grad_y, t.mat_t_vec(lay.A, ay));
        grad_y = t.add(grad_y, t.param_vector(lay.head_b));
    }
    nodes.time_partial = t.slice(grad_y, 0, 1);
    nodes.state_grad = t.slice(grad_y, 1, d);
    if (order == 1) return nodes;

    // v' Hess_y Phi v via second-order Taylor coefficients along y + t v.
    auto directional_second = [&](const Eigen::VectorXd& dir_y) {
        const ad::NodeId v = t.constant(dir_y);
        ad::NodeId a_t = ad::kNoNode;
        ad::NodeId a_tt = ad::kNoNode;
        for (int i = 0; i < layers; ++i) {
            ad::NodeId pre_t, pre_tt;
            if (i == 0) {
                pre_t = t.affine(lay.K[0], {}, v);
                pre_tt = ad::kNoNode;  // the input path is linear in t
            } else {
                pre_t = t.affine(lay.K[i], {}, a_t);
                pre_tt = t.affine(lay.K[i], {}, a_tt);
            }
            ad::NodeId out_t = t.hadamard(act_node(i, 1), pre_t);
            ad::NodeId out_tt = t.hadamard(act_node(i, 2), t.hadamard(pre_t, pre_t));
            if (pre_tt != ad::kNoNode)
                out_tt = t.add(out_tt, t.hadamard(act_node(i, 1), pre_tt));
            if (res && i > 0) {
                out_t = t.add(out_t, a_t);
                out_tt = t.add(out_tt, a_tt);
            }
            a_t = out_t;
            a_tt = out_tt;
        }
        ad::NodeId dd = t.dot_param(lay.w, a_tt);
        if (m.arch.use_quadratic_head)
            dd = t.add(dd, t.square_norm(t.affine(lay.A, {}, v)));
        return dd;
    };

    Eigen::VectorXd dir_y = Eigen::VectorXd::Zero(d + 1);
    ad::NodeId trace = ad::kNoNode;
    if (strategy->kind == HessianStrategy::Kind::Exact) {
        for (int j = 0; j < d; ++j) {
            dir_y.tail(d) = sigma->column(d, j);
            const ad::NodeId dd = directional_second(dir_y);
            trace = trace == ad::kNoNode ? dd : t.add(trace, dd);
        }
    } else {
        if (strategy->probes < 1)
            throw std::invalid_argument("Hutchinson estimator needs at least one probe");
        for (int k = 0; k < strategy->probes; ++k) {
            dir_y.tail(d) = sigma->apply(rademacher_probe(strategy->key, k, d));
            const ad::NodeId dd = directional_second(dir_y);
            trace = trace == ad::kNoNode ? dd : t.add(trace, dd);
        }
        trace = t.scale(trace, 1.0 / strategy->probes);
    }
    nodes.hess_trace = trace;
    return nodes;
}

}  // namespace hjb
