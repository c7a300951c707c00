#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hjb/activation.hpp"

namespace hjb {

enum class BodyKind { Mlp, ResNet };

const char* body_kind_name(BodyKind kind);
BodyKind body_kind_from_name(const std::string& name);

// Value-function approximator Phi(y; theta) = w' NN(y) + 1/2 y'A'A y + b'y + c
// with y = (s, z) in R^{d+1}. depth M counts the layers after the opening one,
// so the body holds K_0..K_M and b_0..b_M.
struct Architecture {
    BodyKind kind = BodyKind::Mlp;
    int width = 32;
    int depth = 1;
    Act activation = Act::Tanh;
    int quad_rank = 0;  // 0 means "use default_quad_rank(d)"
    bool use_quadratic_head = true;
};

int default_quad_rank(int d);

// Resolved flat layout of theta. Segment order is fixed by the checkpoint
// format: w | K_0 | b_0 | ... | K_M | b_M | A | b | c, matrices row-major.
struct ParamLayout {
    struct Seg {
        int offset = 0;
        int rows = 0;
        int cols = 1;
        int size() const { return rows * cols; }
    };

    Architecture arch;
    int d = 0;
    Seg w;
    std::vector<Seg> K;  // K[i] is width x (i == 0 ? d+1 : width)
    std::vector<Seg> b;
    Seg A;       // quad_rank x (d+1); empty when head disabled
    Seg head_b;  // d+1
    Seg head_c;  // 1
    int total = 0;

    static ParamLayout build(Architecture arch, int d);

    // Row-major map of a matrix segment.
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    matrix(const Eigen::VectorXd& theta, const Seg& seg) const {
        return {theta.data() + seg.offset, seg.rows, seg.cols};
    }
    Eigen::Map<const Eigen::VectorXd> vector(const Eigen::VectorXd& theta, const Seg& seg) const {
        return {theta.data() + seg.offset, seg.size()};
    }
};

int param_count(const Architecture& arch, int d);

struct AdamState;  // trainer.hpp

struct ValueModel {
    Architecture arch;
    int d = 0;
    ParamLayout layout;
    Eigen::VectorXd theta;

    static ValueModel init(Architecture arch, int d, std::uint64_t seed);
};

// Checkpoint payload. Adam moments and the RNG bookkeeping ride along so a
// resumed run is bit-identical to an uninterrupted one.
struct CheckpointExtras {
    std::optional<Eigen::VectorXd> adam_m;
    std::optional<Eigen::VectorXd> adam_v;
    std::optional<std::int64_t> adam_step;
    std::optional<std::uint64_t> rng_seed;
    std::optional<std::int64_t> rng_iteration;
};

void save_checkpoint(const ValueModel& model, const CheckpointExtras& extras,
                     const std::string& path);
ValueModel load_checkpoint(const std::string& path, CheckpointExtras* extras = nullptr);

}  // namespace hjb
