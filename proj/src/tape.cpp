#include "hjb/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace hjb::ad {

namespace {
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstRowMajorMap mat(const Eigen::VectorXd& theta, const ParamLayout::Seg& seg) {
    return {theta.data() + seg.offset, seg.rows, seg.cols};
}
Eigen::Map<const Eigen::VectorXd> vec(const Eigen::VectorXd& theta, const ParamLayout::Seg& seg) {
    return {theta.data() + seg.offset, seg.rows * seg.cols};
}
}  // namespace

double Tape::scalar(NodeId id) const {
    const auto& v = value(id);
    if (v.size() != 1) throw std::logic_error("tape node is not a scalar");
    return v[0];
}

NodeId Tape::constant(Eigen::VectorXd v) {
    Node n{};
    n.op = Op::Constant;
    n.value = std::move(v);
    return push(std::move(n));
}

NodeId Tape::constant_scalar(double v) {
    return constant(Eigen::VectorXd::Constant(1, v));
}

NodeId Tape::param_vector(const Seg& seg) {
    Node n{};
    n.op = Op::ParamVec;
    n.seg1 = seg;
    n.value = vec(*theta_, seg);
    return push(std::move(n));
}

NodeId Tape::affine(const Seg& W, const Seg& b, NodeId x) {
    Node n{};
    n.op = Op::Affine;
    n.seg1 = W;
    n.seg2 = b;
    n.x = x;
    n.value.noalias() = mat(*theta_, W) * val(x);
    if (b.size() > 0) n.value += vec(*theta_, b);
    return push(std::move(n));
}

NodeId Tape::mat_t_vec(const Seg& W, NodeId x) {
    Node n{};
    n.op = Op::MatTVec;
    n.seg1 = W;
    n.x = x;
    n.value.noalias() = mat(*theta_, W).transpose() * val(x);
    return push(std::move(n));
}

NodeId Tape::act(NodeId x, Act kind, int order) {
    Node n{};
    n.op = Op::ActEval;
    n.x = x;
    n.i0 = static_cast<int>(kind);
    n.i1 = order;
    n.value = act_eval(kind, val(x), order);
    return push(std::move(n));
}

NodeId Tape::hadamard(NodeId x, NodeId y) {
    Node n{};
    n.op = Op::Hadamard;
    n.x = x;
    n.y = y;
    n.value = val(x).cwiseProduct(val(y));
    return push(std::move(n));
}

NodeId Tape::exp(NodeId x) {
    Node n{};
    n.op = Op::Exp;
    n.x = x;
    n.value = val(x).array().exp();
    return push(std::move(n));
}

NodeId Tape::log(NodeId x) {
    Node n{};
    n.op = Op::Log;
    n.x = x;
    n.value = val(x).array().log();
    return push(std::move(n));
}

NodeId Tape::add(NodeId x, NodeId y) {
    Node n{};
    n.op = Op::Add;
    n.x = x;
    n.y = y;
    n.value = val(x) + val(y);
    return push(std::move(n));
}

NodeId Tape::sub(NodeId x, NodeId y) {
    Node n{};
    n.op = Op::Sub;
    n.x = x;
    n.y = y;
    n.value = val(x) - val(y);
    return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double c) {
    Node n{};
    n.op = Op::Scale;
    n.x = x;
    n.c = c;
    n.value = c * val(x);
    return push(std::move(n));
}

NodeId Tape::add_const(NodeId x, Eigen::VectorXd v) {
    Node n{};
    n.op = Op::AddConstVec;
    n.x = x;
    n.value = val(x) + v;
    n.payload = std::move(v);
    return push(std::move(n));
}

NodeId Tape::concat(NodeId x, NodeId y) {
    Node n{};
    n.op = Op::Concat;
    n.x = x;
    n.y = y;
    n.i0 = static_cast<int>(val(x).size());
    n.value.resize(val(x).size() + val(y).size());
    n.value << val(x), val(y);
    return push(std::move(n));
}

NodeId Tape::slice(NodeId x, int start, int len) {
    Node n{};
    n.op = Op::Slice;
    n.x = x;
    n.i0 = start;
    n.i1 = len;
    n.value = val(x).segment(start, len);
    return push(std::move(n));
}

NodeId Tape::dot(NodeId x, NodeId y) {
    Node n{};
    n.op = Op::Dot;
    n.x = x;
    n.y = y;
    n.value = Eigen::VectorXd::Constant(1, val(x).dot(val(y)));
    return push(std::move(n));
}

NodeId Tape::dot_param(const Seg& w, NodeId x) {
    Node n{};
    n.op = Op::DotParam;
    n.seg1 = w;
    n.x = x;
    n.value = Eigen::VectorXd::Constant(1, vec(*theta_, w).dot(val(x)));
    return push(std::move(n));
}

NodeId Tape::square_norm(NodeId x) {
    Node n{};
    n.op = Op::SquareNorm;
    n.x = x;
    n.value = Eigen::VectorXd::Constant(1, val(x).squaredNorm());
    return push(std::move(n));
}

NodeId Tape::norm(NodeId x) {
    Node n{};
    n.op = Op::Norm;
    n.x = x;
    n.value = Eigen::VectorXd::Constant(1, val(x).norm());
    return push(std::move(n));
}

NodeId Tape::abs_pow(NodeId x, int p) {
    if (p != 1 && p != 2) throw std::invalid_argument("abs_pow exponent must be 1 or 2");
    Node n{};
    n.op = Op::AbsPow;
    n.x = x;
    n.i0 = p;
    const double v = scalar(x);
    n.value = Eigen::VectorXd::Constant(1, p == 2 ? v * v : std::abs(v));
    return push(std::move(n));
}

NodeId Tape::scalar_vec_mul(NodeId s, NodeId v) {
    Node n{};
    n.op = Op::ScalarVecMul;
    n.x = s;
    n.y = v;
    n.value = scalar(s) * val(v);
    return push(std::move(n));
}

NodeId Tape::inv(NodeId x) {
    Node n{};
    n.op = Op::Inv;
    n.x = x;
    n.value = Eigen::VectorXd::Constant(1, 1.0 / scalar(x));
    return push(std::move(n));
}

Eigen::VectorXd Tape::gradient(NodeId root) {
    Eigen::VectorXd grad(theta_->size());
    gradient_into(root, grad);
    return grad;
}

void Tape::gradient_into(NodeId root, Eigen::VectorXd& grad) {
    if (grad.size() != theta_->size()) grad.resize(theta_->size());
    grad.setZero();
    if (value(root).size() != 1) throw std::invalid_argument("gradient root must be a scalar");

    adjoint_.resize(nodes_.size());
    const auto live = static_cast<std::size_t>(root) + 1;
    for (std::size_t i = 0; i < live; ++i) {
        auto& adj = adjoint_[i];
        if (adj.size() != nodes_[i].value.size()) adj.resize(nodes_[i].value.size());
        adj.setZero();
    }
    adjoint_[static_cast<std::size_t>(root)][0] = 1.0;

    for (std::size_t idx = live; idx-- > 0;) {
        const Node& n = nodes_[idx];
        const Eigen::VectorXd& bar = adjoint_[idx];
        if (bar.isZero(0.0)) continue;
        switch (n.op) {
            case Op::Constant:
                break;
            case Op::ParamVec:
                grad.segment(n.seg1.offset, n.seg1.size()) += bar;
                break;
            case Op::Affine: {
                RowMajorMap gW(grad.data() + n.seg1.offset, n.seg1.rows, n.seg1.cols);
                gW.noalias() += bar * val(n.x).transpose();
                if (n.seg2.size() > 0) grad.segment(n.seg2.offset, n.seg2.size()) += bar;
                adjoint_[static_cast<std::size_t>(n.x)].noalias() +=
                    mat(*theta_, n.seg1).transpose() * bar;
                break;
            }
            case Op::MatTVec: {
                RowMajorMap gW(grad.data() + n.seg1.offset, n.seg1.rows, n.seg1.cols);
                gW.noalias() += val(n.x) * bar.transpose();
                adjoint_[static_cast<std::size_t>(n.x)].noalias() += mat(*theta_, n.seg1) * bar;
                break;
            }
            case Op::ActEval:
                adjoint_[static_cast<std::size_t>(n.x)] +=
                    act_eval(static_cast<Act>(n.i0), val(n.x), n.i1 + 1).cwiseProduct(bar);
                break;
            case Op::Hadamard:
                adjoint_[static_cast<std::size_t>(n.x)] += val(n.y).cwiseProduct(bar);
                adjoint_[static_cast<std::size_t>(n.y)] += val(n.x).cwiseProduct(bar);
                break;
            case Op::Exp:
                adjoint_[static_cast<std::size_t>(n.x)] += n.value.cwiseProduct(bar);
                break;
            case Op::Log:
                adjoint_[static_cast<std::size_t>(n.x)] += bar.cwiseQuotient(val(n.x));
                break;
            case Op::Add:
                adjoint_[static_cast<std::size_t>(n.x)] += bar;
                adjoint_[static_cast<std::size_t>(n.y)] += bar;
                break;
            case Op::Sub:
                adjoint_[static_cast<std::size_t>(n.x)] += bar;
                adjoint_[static_cast<std::size_t>(n.y)] -= bar;
                break;
            case Op::Scale:
                adjoint_[static_cast<std::size_t>(n.x)] += n.c * bar;
                break;
            case Op::AddConstVec:
                adjoint_[static_cast<std::size_t>(n.x)] += bar;
                break;
            case Op::Concat:
                adjoint_[static_cast<std::size_t>(n.x)] += bar.head(n.i0);
                adjoint_[static_cast<std::size_t>(n.y)] += bar.tail(bar.size() - n.i0);
                break;
            case Op::Slice:
                adjoint_[static_cast<std::size_t>(n.x)].segment(n.i0, n.i1) += bar;
                break;
            case Op::Dot:
                adjoint_[static_cast<std::size_t>(n.x)] += bar[0] * val(n.y);
                adjoint_[static_cast<std::size_t>(n.y)] += bar[0] * val(n.x);
                break;
            case Op::DotParam:
                grad.segment(n.seg1.offset, n.seg1.size()) += bar[0] * val(n.x);
                adjoint_[static_cast<std::size_t>(n.x)] += bar[0] * vec(*theta_, n.seg1);
                break;
            case Op::SquareNorm:
                adjoint_[static_cast<std::size_t>(n.x)] += 2.0 * bar[0] * val(n.x);
                break;
            case Op::Norm: {
                const double nv = n.value[0];
                if (nv > 0.0)
                    adjoint_[static_cast<std::size_t>(n.x)] += (bar[0] / nv) * val(n.x);
                break;
            }
            case Op::AbsPow: {
                const double v = val(n.x)[0];
                const double d = n.i0 == 2 ? 2.0 * v : (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
                adjoint_[static_cast<std::size_t>(n.x)][0] += d * bar[0];
                break;
            }
            case Op::ScalarVecMul:
                adjoint_[static_cast<std::size_t>(n.x)][0] += val(n.y).dot(bar);
                adjoint_[static_cast<std::size_t>(n.y)] += val(n.x)[0] * bar;
                break;
            case Op::Inv: {
                const double v = val(n.x)[0];
                adjoint_[static_cast<std::size_t>(n.x)][0] -= bar[0] / (v * v);
                break;
            }
        }
    }
}

}  // namespace hjb::ad
