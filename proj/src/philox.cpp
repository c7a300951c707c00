#include "hjb/philox.hpp"

#include <cmath>

namespace hjb::rng {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;  // golden ratio
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;  // sqrt(3) - 1

inline void round_once(Philox4x32::Counter& ctr, const Philox4x32::Key& key) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline Philox4x32::Key stream_key(const StreamKey& k) {
    // Fold the stream id into the 64-bit seed with Weyl constants so distinct
    // streams act as unrelated keys.
    const auto s = static_cast<std::uint32_t>(k.stream);
    return {static_cast<std::uint32_t>(k.seed) + s * kWeyl0,
            static_cast<std::uint32_t>(k.seed >> 32) + s * kWeyl1};
}

inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
    // 53-bit mantissa in (0, 1]; never 0 so log() is safe.
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
        round_once(ctr, key);
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

std::array<double, 2> uniform_pair(const StreamKey& key, std::uint32_t block_index) {
    const Philox4x32::Counter ctr = {key.a, key.b, key.c, block_index};
    const auto out = Philox4x32::block(ctr, stream_key(key));
    return {to_unit_open(out[0], out[1]), to_unit_open(out[2], out[3])};
}

std::array<double, 2> gaussian_pair(const StreamKey& key, std::uint32_t block_index) {
    const auto u = uniform_pair(key, block_index);
    const double r = std::sqrt(-2.0 * std::log(u[0]));
    const double phi = 2.0 * M_PI * u[1];
    return {r * std::cos(phi), r * std::sin(phi)};
}

Eigen::VectorXd gaussian_vector(const StreamKey& key, int n, double scale) {
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; i += 2) {
        const auto g = gaussian_pair(key, static_cast<std::uint32_t>(i / 2));
        out[i] = scale * g[0];
        if (i + 1 < n) out[i + 1] = scale * g[1];
    }
    return out;
}

Eigen::VectorXd uniform_symmetric_vector(const StreamKey& key, int n, double bound) {
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; i += 2) {
        const auto u = uniform_pair(key, static_cast<std::uint32_t>(i / 2));
        out[i] = bound * (2.0 * u[0] - 1.0);
        if (i + 1 < n) out[i + 1] = bound * (2.0 * u[1] - 1.0);
    }
    return out;
}

}  // namespace hjb::rng
