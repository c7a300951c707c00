#pragma once

#include "hjb/model_eval.hpp"
#include "hjb/tape.hpp"

namespace hjb {

// Handles into a RecordingContext's tape for one model evaluation.
struct ModelEvalNodes {
    ad::NodeId phi = ad::kNoNode;
    ad::NodeId time_partial = ad::kNoNode;  // order >= 1
    ad::NodeId state_grad = ad::kNoNode;    // order >= 1
    ad::NodeId hess_trace = ad::kNoNode;    // order == 2
};

// Records differentiable scalar programs over one model's parameter vector.
// Programs may contain Phi, its first input derivatives and weighted Hessian
// traces; one reverse sweep returns the parameter gradient. Owned by a single
// execution stream.
class RecordingContext {
public:
    explicit RecordingContext(const ValueModel& model)
        : model_(&model), tape_(model.theta) {}

    ad::Tape& tape() { return tape_; }
    const ValueModel& model() const { return *model_; }

    void reset() { tape_.reset(); }

    ad::NodeId state_constant(const Eigen::VectorXd& z) { return tape_.constant(z); }

    // Record Phi at (s, z) together with input derivatives up to `order`:
    //   0: value only, 1: + (d_s Phi, grad_z Phi), 2: + tr(sigma sigma' Hess).
    // Requesting order > 2 is unsupported by construction.
    ModelEvalNodes record_eval(double s, ad::NodeId z, int order,
                               const DiffusionEval* sigma = nullptr,
                               const HessianStrategy* strategy = nullptr);

    Eigen::VectorXd gradient(ad::NodeId loss) { return tape_.gradient(loss); }
    void gradient_into(ad::NodeId loss, Eigen::VectorXd& grad) {
        tape_.gradient_into(loss, grad);
    }

private:
    const ValueModel* model_;
    ad::Tape tape_;
};

// d(loss)/d(theta) for a scalar program already recorded on the context.
inline Eigen::VectorXd loss_gradient(RecordingContext& ctx, ad::NodeId loss) {
    return ctx.gradient(loss);
}

}  // namespace hjb
