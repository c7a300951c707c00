#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

namespace hjb::rng {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (seed, stream, counter), so parallel rollouts can pull their noise by key
// instead of sharing a sequential generator.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key);
};

// Logical sub-generators. Keeping them disjoint means e.g. running the
// evaluation hook cannot perturb the training noise.
enum class Stream : std::uint32_t {
    ParamInit = 1,
    TrainInit = 2,
    TrainPath = 3,
    EvalInit = 4,
    EvalPath = 5,
    Oracle = 6,
    Hutchinson = 7,
    Generic = 8,
};

// Key of one logical draw site: (seed, stream) select the generator,
// (a, b, c) index the draw (e.g. a=iteration, b=trajectory, c=step).
struct StreamKey {
    std::uint64_t seed = 0;
    Stream stream = Stream::Generic;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::uint32_t c = 0;

    StreamKey with(std::uint32_t a_, std::uint32_t b_, std::uint32_t c_ = 0) const {
        return StreamKey{seed, stream, a_, b_, c_};
    }
};

// Two U(0,1] doubles (53-bit) from one Philox block.
std::array<double, 2> uniform_pair(const StreamKey& key, std::uint32_t block_index);

// Two standard normals via Box-Muller on one block.
std::array<double, 2> gaussian_pair(const StreamKey& key, std::uint32_t block_index);

// n i.i.d. N(0, scale^2) samples for the given key.
Eigen::VectorXd gaussian_vector(const StreamKey& key, int n, double scale = 1.0);

// n i.i.d. U(-bound, bound) samples for the given key.
Eigen::VectorXd uniform_symmetric_vector(const StreamKey& key, int n, double bound);

}  // namespace hjb::rng
