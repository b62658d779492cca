#include "support/generators.hpp"
#include "support/oracles.hpp"

#include "zsd/error.hpp"
#include "zsd/semantics.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace zsd;

namespace {

SemanticTable line_table()
{
    SemanticTable t(2);
    t.add(1, "a", (Vec(2) << 0, 0).finished());
    t.add(2, "b", (Vec(2) << 1, 0).finished());
    t.add(3, "c", (Vec(2) << 4, 0).finished());
    return t;
}

} // namespace

TEST_SUITE("semantics")
{
    TEST_CASE("full shrinkage gives the scaled identity exactly")
    {
        gen::Rng rng(1);
        const auto table = gen::semantic_table(rng, 6, 4);
        const Mat sigma = covariance_of_semantics(table, 0.0);
        const Mat reg = covariance_of_semantics(table, 1.0);
        CHECK(reg == Mat::Identity(4, 4) * (sigma.trace() / 4.0));
    }

    TEST_CASE("covariance uses the population denominator")
    {
        SemanticTable t(1);
        t.add(1, "a", Vec::Constant(1, 0.0));
        t.add(2, "b", Vec::Constant(1, 2.0));
        CHECK(covariance_of_semantics(t, 0.0)(0, 0) == doctest::Approx(1.0));
    }

    TEST_CASE("identity covariance reduces to Euclidean distance")
    {
        // Spread 1 in x only: tr/d = ((0,1,4) variance) / 2, rescale so that it is 1.
        const auto t = line_table();
        const double var = covariance_of_semantics(t, 1.0).trace() / 2.0;
        SemanticTable unit(2);
        for (const auto& [id, e] : t.entries()) {
            unit.add(id, e.name, e.vector / std::sqrt(var));
        }
        const Mat d = mahalanobis_distances(unit, 1.0);
        CHECK((d - oracle::euclidean_distances(unit)).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("three collinear classes against the brute-force rescale")
    {
        const auto mm = margin_matrix(line_table(), 1.0, {0.1, 1.0});
        const Mat expected = oracle::min_max_rescale(oracle::euclidean_distances(line_table()), 0.1, 1.0);
        CHECK((mm.values() - expected).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(mm.margin(1, 2) == doctest::Approx(0.1));
        CHECK(mm.margin(1, 3) == doctest::Approx(1.0));
        CHECK(mm.margin(2, 3) == doctest::Approx(expected(1, 2)));
        CHECK(mm.margin(3, 2) == doctest::Approx(0.7));
    }

    TEST_CASE("lookups")
    {
        const auto mm = margin_matrix(line_table(), 0.5);
        CHECK(mm.margin(2, 2) == 0.0);
        CHECK(mm.margin(1, 3) == mm.values()(0, 2));
        CHECK(mm.contains(3));
        CHECK_FALSE(mm.contains(4));
        CHECK_THROWS_AS((void)mm.margin(1, 4), ValidationError);
    }

    TEST_CASE("rescaled margins preserve the order of raw distances")
    {
        gen::Rng rng(2);
        for (int t = 0; t < 30; ++t) {
            const auto table = gen::semantic_table(rng, gen::uniform_int(rng, 3, 10), gen::uniform_int(rng, 2, 6));
            const double s = gen::uniform(rng, 0.1, 1.0);
            const Mat raw = mahalanobis_distances(table, s);
            const Mat m = margin_matrix(table, s).values();
            const auto n = raw.rows();
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < n; ++j) {
                    for (Eigen::Index k = 0; k < n; ++k) {
                        for (Eigen::Index l = 0; l < n; ++l) {
                            if (i != j && k != l && raw(i, j) < raw(k, l)) {
                                CHECK(m(i, j) <= m(k, l));
                            }
                        }
                    }
                }
            }
        }
    }

    TEST_CASE("engineered similar pairs get smaller margins than the median pair")
    {
        for (std::uint64_t seed : {0U, 1U, 2U}) {
            BenchSpec spec;
            spec.seed = seed;
            spec.images = 5;
            const auto bench = generate_benchmark(spec);
            const auto mm = margin_matrix(bench.semantics, 0.5);
            std::vector<double> off;
            const Mat& v = mm.values();
            for (Eigen::Index i = 0; i < v.rows(); ++i) {
                for (Eigen::Index j = i + 1; j < v.cols(); ++j) {
                    off.push_back(v(i, j));
                }
            }
            std::nth_element(off.begin(), off.begin() + static_cast<long>(off.size() / 2), off.end());
            const double median = off[off.size() / 2];
            for (const auto& p : bench.similar_pairs) {
                CHECK(mm.margin(p.unseen, p.seen) < median);
            }
        }
    }

    TEST_CASE("invalid inputs")
    {
        CHECK_THROWS_AS((void)margin_matrix(line_table(), 0.5, {0.0, 1.0}), ValidationError);
        CHECK_THROWS_AS((void)margin_matrix(line_table(), 0.5, {1.0, 0.5}), ValidationError);
        CHECK_THROWS_AS((void)covariance_of_semantics(line_table(), 1.5), ValidationError);
        SemanticTable one(2);
        one.add(1, "a", Vec::Zero(2));
        CHECK_THROWS_AS((void)covariance_of_semantics(one, 0.5), ValidationError);
        // Rank-deficient covariance without shrinkage.
        CHECK_THROWS_AS((void)mahalanobis_distances(line_table(), 0.0), NumericError);
        // All distances equal.
        SemanticTable same(2);
        same.add(1, "a", Vec::Zero(2));
        same.add(2, "b", Vec::Ones(2));
        CHECK_THROWS_AS((void)margin_matrix(same, 0.5), NumericError);
    }

    TEST_CASE("margin matrix CSV round trip")
    {
        gen::Rng rng(4);
        const auto mm = margin_matrix(gen::semantic_table(rng, 5, 3), 0.5);
        const auto path = std::filesystem::temp_directory_path() / "zsd_test_margins.csv";
        save_margin_matrix(mm, path);
        const auto back = load_margin_matrix(path);
        CHECK(back.class_ids() == mm.class_ids());
        CHECK(back.values() == mm.values());
        std::filesystem::remove(path);
    }
}
