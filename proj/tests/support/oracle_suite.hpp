#ifndef ZSD_TESTS_ORACLE_SUITE_HPP
#define ZSD_TESTS_ORACLE_SUITE_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace zsd::check {

// AP values are sums of rationals accumulated in a different order by the
// oracle, so equality is up to rounding.
inline constexpr double kApTolerance = 1e-12;

struct OracleReport {
    std::string routine;
    int cases = 0;
    int mismatches = 0;
    std::string first_failure;
};

// Randomized comparisons of mine_triplets, nms, match_detections and
// average_precision against the brute-force oracles.
std::vector<OracleReport> oracle_suite(std::uint64_t seed, int cases);

} // namespace zsd::check

#endif // ZSD_TESTS_ORACLE_SUITE_HPP
