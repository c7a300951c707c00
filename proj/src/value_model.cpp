#include "hjb/value_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "hjb/philox.hpp"

namespace hjb {

const char* body_kind_name(BodyKind kind) {
    return kind == BodyKind::Mlp ? "mlp" : "resnet";
}

BodyKind body_kind_from_name(const std::string& name) {
    if (name == "mlp") return BodyKind::Mlp;
    if (name == "resnet") return BodyKind::ResNet;
    throw std::invalid_argument("unknown model kind '" + name + "' (expected mlp|resnet)");
}

const char* act_name(Act act) {
    switch (act) {
        case Act::Tanh: return "tanh";
        case Act::LogCosh: return "log_cosh";
        case Act::Sin: return "sin";
    }
    return "?";
}

Act act_from_name(const std::string& name) {
    if (name == "tanh") return Act::Tanh;
    if (name == "log_cosh") return Act::LogCosh;
    if (name == "sin") return Act::Sin;
    throw std::invalid_argument("unknown activation '" + name + "' (expected tanh|log_cosh|sin)");
}

int default_quad_rank(int d) { return std::min(10, d + 1); }

ParamLayout ParamLayout::build(Architecture arch, int d) {
    if (d < 1) throw std::invalid_argument("state dimension must be >= 1");
    if (arch.width < 1) throw std::invalid_argument("width must be >= 1");
    if (arch.depth < 0) throw std::invalid_argument("depth must be >= 0");
    if (arch.quad_rank == 0) arch.quad_rank = default_quad_rank(d);
    if (arch.use_quadratic_head && arch.quad_rank < 1)
        throw std::invalid_argument("quad_rank must be >= 1");

    ParamLayout layout;
    layout.arch = arch;
    layout.d = d;
    const int m = arch.width;
    const int in = d + 1;
    int off = 0;
    auto take = [&off](int rows, int cols) {
        Seg seg{off, rows, cols};
        off += rows * cols;
        return seg;
    };

    layout.w = take(m, 1);
    layout.K.reserve(arch.depth + 1);
    layout.b.reserve(arch.depth + 1);
    for (int i = 0; i <= arch.depth; ++i) {
        layout.K.push_back(take(m, i == 0 ? in : m));
        layout.b.push_back(take(m, 1));
    }
    if (arch.use_quadratic_head) {
        layout.A = take(arch.quad_rank, in);
        layout.head_b = take(in, 1);
        layout.head_c = take(1, 1);
    }
    layout.total = off;
    return layout;
}

int param_count(const Architecture& arch, int d) {
    return ParamLayout::build(arch, d).total;
}

ValueModel ValueModel::init(Architecture arch, int d, std::uint64_t seed) {
    ValueModel model;
    model.layout = ParamLayout::build(arch, d);
    model.arch = model.layout.arch;  // with quad_rank resolved
    model.d = d;
    model.theta = Eigen::VectorXd::Zero(model.layout.total);

    // Only the body matrices get the fan-based uniform init; w, biases and the
    // head stay zero so the initial model is Phi == 0.
    rng::StreamKey key{seed, rng::Stream::ParamInit};
    for (std::size_t i = 0; i < model.layout.K.size(); ++i) {
        const auto& seg = model.layout.K[i];
        const double bound = std::sqrt(6.0 / (seg.cols + seg.rows));
        model.theta.segment(seg.offset, seg.size()) =
            rng::uniform_symmetric_vector(key.with(static_cast<std::uint32_t>(i), 0), seg.size(),
                                          bound);
    }
    return model;
}

namespace {

nlohmann::json arch_to_json(const Architecture& arch) {
    return {{"kind", body_kind_name(arch.kind)},
            {"width", arch.width},
            {"depth", arch.depth},
            {"activation", act_name(arch.activation)},
            {"quad_rank", arch.quad_rank},
            {"use_quadratic_head", arch.use_quadratic_head}};
}

Architecture arch_from_json(const nlohmann::json& j) {
    Architecture arch;
    arch.kind = body_kind_from_name(j.at("kind").get<std::string>());
    arch.width = j.at("width").get<int>();
    arch.depth = j.at("depth").get<int>();
    arch.activation = act_from_name(j.at("activation").get<std::string>());
    arch.quad_rank = j.at("quad_rank").get<int>();
    arch.use_quadratic_head = j.at("use_quadratic_head").get<bool>();
    return arch;
}

}  // namespace

void save_checkpoint(const ValueModel& model, const CheckpointExtras& extras,
                     const std::string& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["architecture"] = arch_to_json(model.arch);
    j["d"] = model.d;
    j["param_count"] = model.layout.total;
    j["theta"] = std::vector<double>(model.theta.data(), model.theta.data() + model.theta.size());
    if (extras.adam_m && extras.adam_v && extras.adam_step) {
        j["adam"] = {
            {"m", std::vector<double>(extras.adam_m->data(),
                                      extras.adam_m->data() + extras.adam_m->size())},
            {"v", std::vector<double>(extras.adam_v->data(),
                                      extras.adam_v->data() + extras.adam_v->size())},
            {"step", *extras.adam_step}};
    }
    if (extras.rng_seed) {
        j["rng_state"] = {{"seed", *extras.rng_seed},
                          {"iteration", extras.rng_iteration.value_or(0)}};
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

ValueModel load_checkpoint(const std::string& path, CheckpointExtras* extras) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed checkpoint " + path + ": " + e.what());
    }

    ValueModel model;
    try {
        model.arch = arch_from_json(j.at("architecture"));
        model.d = j.at("d").get<int>();
        model.layout = ParamLayout::build(model.arch, model.d);
        const auto theta = j.at("theta").get<std::vector<double>>();
        if (static_cast<int>(theta.size()) != model.layout.total)
            throw std::runtime_error("theta length " + std::to_string(theta.size()) +
                                     " does not match architecture (expected " +
                                     std::to_string(model.layout.total) + ")");
        model.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(),
                                                        static_cast<Eigen::Index>(theta.size()));
        if (extras) {
            *extras = CheckpointExtras{};
            if (j.contains("adam")) {
                const auto& a = j.at("adam");
                const auto m = a.at("m").get<std::vector<double>>();
                const auto v = a.at("v").get<std::vector<double>>();
                if (m.size() != theta.size() || v.size() != theta.size())
                    throw std::runtime_error("adam state length mismatch");
                extras->adam_m = Eigen::Map<const Eigen::VectorXd>(
                    m.data(), static_cast<Eigen::Index>(m.size()));
                extras->adam_v = Eigen::Map<const Eigen::VectorXd>(
                    v.data(), static_cast<Eigen::Index>(v.size()));
                extras->adam_step = a.at("step").get<std::int64_t>();
            }
            if (j.contains("rng_state")) {
                extras->rng_seed = j.at("rng_state").at("seed").get<std::uint64_t>();
                extras->rng_iteration = j.at("rng_state").at("iteration").get<std::int64_t>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed checkpoint " + path + ": " + e.what());
    }
    return model;
}

}  // namespace hjb
