#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "hjb/activation.hpp"
#include "hjb/value_model.hpp"

namespace hjb::ad {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

// Reverse-mode tape over vector-valued operations. Values are computed
// eagerly; one backward() sweep per scalar root accumulates d(root)/d(theta).
// Matrix parameters never materialize as nodes, they are referenced as
// segments of theta so the backward rules can scatter straight into the flat
// gradient. A tape is owned by exactly one execution stream.
class Tape {
public:
    using Seg = ParamLayout::Seg;

    explicit Tape(const Eigen::VectorXd& theta) : theta_(&theta) {}

    void reset() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    const Eigen::VectorXd& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    double scalar(NodeId id) const;

    NodeId constant(Eigen::VectorXd v);
    NodeId constant_scalar(double v);
    NodeId param_vector(const Seg& seg);
    // W x + b; pass a default-constructed Seg for b to skip the bias.
    NodeId affine(const Seg& W, const Seg& b, NodeId x);
    NodeId mat_t_vec(const Seg& W, NodeId x);  // W' x
    NodeId act(NodeId x, Act kind, int order);
    NodeId hadamard(NodeId x, NodeId y);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId add(NodeId x, NodeId y);
    NodeId sub(NodeId x, NodeId y);
    NodeId scale(NodeId x, double c);
    NodeId add_const(NodeId x, Eigen::VectorXd v);
    NodeId concat(NodeId x, NodeId y);
    NodeId slice(NodeId x, int start, int len);
    NodeId dot(NodeId x, NodeId y);
    NodeId dot_param(const Seg& w, NodeId x);
    NodeId square_norm(NodeId x);
    NodeId norm(NodeId x);
    NodeId abs_pow(NodeId x, int p);
    NodeId scalar_vec_mul(NodeId s, NodeId v);
    NodeId inv(NodeId x);

    // d(root)/d(theta) for a scalar root. Resets adjoints, so it can be called
    // for several roots on the same tape.
    Eigen::VectorXd gradient(NodeId root);
    void gradient_into(NodeId root, Eigen::VectorXd& grad);

private:
    enum class Op : std::uint8_t {
        Constant,
        ParamVec,
        Affine,
        MatTVec,
        ActEval,
        Hadamard,
        Exp,
        Log,
        Add,
        Sub,
        Scale,
        AddConstVec,
        Concat,
        Slice,
        Dot,
        DotParam,
        SquareNorm,
        Norm,
        AbsPow,
        ScalarVecMul,
        Inv,
    };

    struct Node {
        Op op;
        NodeId x = kNoNode;
        NodeId y = kNoNode;
        Seg seg1{};
        Seg seg2{};
        double c = 0.0;
        int i0 = 0;
        int i1 = 0;
        Eigen::VectorXd value;
        Eigen::VectorXd payload;
    };

    NodeId push(Node node) {
        nodes_.push_back(std::move(node));
        return static_cast<NodeId>(nodes_.size() - 1);
    }
    const Eigen::VectorXd& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }

    const Eigen::VectorXd* theta_;
    std::vector<Node> nodes_;
    std::vector<Eigen::VectorXd> adjoint_;  // reused between backward sweeps
};

}  // namespace hjb::ad
