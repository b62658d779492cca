#ifndef ZSD_TYPES_HPP
#define ZSD_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace zsd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using ClassId = int;

// Axis-aligned box, top-left corner plus extent, in pixels.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 1.0;
    double h = 1.0;

    friend bool operator==(const Box&, const Box&) = default;
};

// Mixes a base seed with a stream tag so independent stages draw from
// unrelated generator states.
[[nodiscard]] inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace zsd

#endif // ZSD_TYPES_HPP
