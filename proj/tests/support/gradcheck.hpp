#ifndef ZSD_TESTS_GRADCHECK_HPP
#define ZSD_TESTS_GRADCHECK_HPP

#include "zsd/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace zsd::check {

inline constexpr double kStep = 1e-6;

// Central differences, one coordinate at a time.
Vec numeric_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = kStep);

// ||a - b|| / max(||a||, ||b||), zero when both vanish.
double relative_error(const Vec& a, const Vec& b);

struct GradientReport {
    std::string term;
    int instances = 0;
    double worst = 0.0;
};

// One report per differentiable objective. Parameters of every network
// involved are randomized per instance, seeded from `seed`.
std::vector<GradientReport> gradient_suite(std::uint64_t seed, int instances);

} // namespace zsd::check

#endif // ZSD_TESTS_GRADCHECK_HPP
