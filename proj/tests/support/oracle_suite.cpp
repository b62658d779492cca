#include "oracle_suite.hpp"

#include "generators.hpp"
#include "oracles.hpp"

#include "zsd/synthesizer.hpp"

#include <cmath>
#include <sstream>

namespace zsd::check {

namespace {

bool same(const Detection& a, const Detection& b)
{
    return a.image_id == b.image_id && a.box == b.box && a.label == b.label && a.score == b.score;
}

bool same(const std::vector<Detection>& a, const std::vector<Detection>& b)
{
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!same(a[i], b[i])) {
            return false;
        }
    }
    return true;
}

} // namespace

std::vector<OracleReport> oracle_suite(std::uint64_t seed, int cases)
{
    std::vector<OracleReport> reports;
    auto run = [&](const std::string& name, const auto& one) {
        OracleReport r{name, cases, 0, {}};
        gen::Rng rng(derive_seed(seed, reports.size()));
        for (int i = 0; i < cases; ++i) {
            const std::string failure = one(rng);
            if (!failure.empty()) {
                if (r.mismatches == 0) {
                    r.first_failure = "case " + std::to_string(i) + ": " + failure;
                }
                ++r.mismatches;
            }
        }
        reports.push_back(r);
    };

    run("triplet_mining", [](gen::Rng& rng) -> std::string {
        const auto n = static_cast<std::size_t>(gen::uniform_int(rng, 0, 8));
        const auto labels = gen::labels(rng, n, gen::uniform_int(rng, 1, 4));
        const auto mined = mine_triplets(labels);
        if (mined != oracle::triplets(labels)) {
            return "triplet sets differ";
        }
        if (mined.size() != oracle::triplet_count(labels)) {
            return "count differs from the closed form";
        }
        return {};
    });

    run("nms", [](gen::Rng& rng) -> std::string {
        const auto dets = gen::single_group(rng, static_cast<std::size_t>(gen::uniform_int(rng, 0, 6)));
        const double t = gen::uniform_int(rng, 1, 9) / 10.0;
        const auto expected = oracle::nms(dets, t);
        if (!dets.empty() && expected.empty()) {
            return "oracle found no unique solution";
        }
        return same(nms(dets, t), expected) ? std::string{} : "kept sets differ";
    });

    run("match_detections", [](gen::Rng& rng) -> std::string {
        const auto s = gen::scene(rng, static_cast<std::size_t>(gen::uniform_int(rng, 0, 6)),
                                  static_cast<std::size_t>(gen::uniform_int(rng, 0, 4)), 2, 2);
        const double t = gen::uniform_int(rng, 1, 6) / 10.0;
        const auto got = match_detections(s.dets, s.gts, t);
        const auto expected = oracle::match(s.dets, s.gts, t);
        if (got.det_tp != expected.det_tp) {
            return "detection flags differ";
        }
        return got.gt_matched == expected.gt_matched ? std::string{} : "ground-truth flags differ";
    });

    run("average_precision", [](gen::Rng& rng) -> std::string {
        const auto c = gen::ap_case(rng, 8);
        const auto got = average_precision(c.tp, c.scores, c.n_gt);
        const double expected = oracle::average_precision(c.tp, c.scores, c.n_gt);
        if (!got) {
            return "library returned no value";
        }
        if (std::abs(*got - expected) > kApTolerance) {
            std::ostringstream os;
            os << "AP " << *got << " vs " << expected;
            return os.str();
        }
        return {};
    });

    return reports;
}

} // namespace zsd::check
