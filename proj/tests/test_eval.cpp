#include "support/generators.hpp"
#include "support/oracle_suite.hpp"
#include "support/oracles.hpp"

#include "zsd/error.hpp"
#include "zsd/eval.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace zsd;

namespace {

Detection det(const std::string& image, Box box, ClassId label, double score)
{
    return {image, box, label, score};
}

// Continuous boxes and distinct scores: no ties anywhere.
gen::Scene continuous_scene(gen::Rng& rng, std::size_t n_dets, std::size_t n_gts)
{
    gen::Scene s;
    auto box = [&] {
        return Box{gen::uniform(rng, 0, 5), gen::uniform(rng, 0, 5), gen::uniform(rng, 1, 4), gen::uniform(rng, 1, 4)};
    };
    auto image = [&] { return "img" + std::to_string(gen::uniform_int(rng, 0, 2)); };
    for (std::size_t i = 0; i < n_gts; ++i) {
        s.gts.push_back({image(), box(), gen::uniform_int(rng, 1, 4)});
    }
    for (std::size_t i = 0; i < n_dets; ++i) {
        s.dets.push_back({image(), box(), gen::uniform_int(rng, 1, 4), gen::uniform(rng, 0.0, 1.0)});
    }
    return s;
}

SplitSpec split_12_34()
{
    return SplitSpec{{1, 2}, {3, 4}, 0};
}

} // namespace

TEST_SUITE("eval")
{
    TEST_CASE("iou examples")
    {
        CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
        CHECK(iou({0, 0, 2, 2}, {5, 5, 1, 1}) == 0.0);
        CHECK(iou({0, 0, 2, 2}, {1, 1, 2, 2}) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
        CHECK(oracle::grid_iou({0, 0, 2, 2}, {1, 1, 2, 2}) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    }

    TEST_CASE("iou matches the unit-grid count and is symmetric")
    {
        gen::Rng rng(11);
        for (int i = 0; i < 500; ++i) {
            const Box a = gen::grid_box(rng);
            const Box b = gen::grid_box(rng);
            CHECK(iou(a, b) == doctest::Approx(oracle::grid_iou(a, b)).epsilon(1e-12));
            CHECK(iou(a, b) == iou(b, a));
            CHECK(iou(a, a) == 1.0);
            CHECK(iou(a, b) >= 0.0);
            CHECK(iou(a, b) <= 1.0);
        }
    }

    TEST_CASE("nms suppresses the lower-scored overlap")
    {
        // IoU 0.8: widths 10 and 8 share 8 columns.
        const std::vector<Detection> dets{det("i", {0, 0, 10, 10}, 1, 0.6), det("i", {0, 0, 8, 10}, 1, 0.9)};
        REQUIRE(iou(dets[0].box, dets[1].box) == doctest::Approx(0.8));
        const auto kept = nms(dets, 0.7);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].score == 0.9);
    }

    TEST_CASE("nms keeps disjoint boxes sorted by score with ties by input order")
    {
        const std::vector<Detection> dets{det("i", {0, 0, 1, 1}, 1, 0.2), det("i", {5, 0, 1, 1}, 1, 0.7),
                                          det("i", {10, 0, 1, 1}, 1, 0.2), det("i", {20, 0, 1, 1}, 1, 0.9)};
        const auto kept = nms(dets, 0.5);
        REQUIRE(kept.size() == 4);
        CHECK(kept[0].box.x == 20);
        CHECK(kept[1].box.x == 5);
        CHECK(kept[2].box.x == 0);
        CHECK(kept[3].box.x == 10);
    }

    TEST_CASE("nms five-box case against the subset oracle")
    {
        const std::vector<Detection> dets{det("i", {0, 0, 4, 4}, 1, 0.9), det("i", {1, 0, 4, 4}, 1, 0.8),
                                          det("i", {2, 0, 4, 4}, 1, 0.7), det("i", {3, 0, 4, 4}, 1, 0.6),
                                          det("i", {6, 6, 2, 2}, 1, 0.5)};
        const auto kept = nms(dets, 0.4);
        const auto expected = oracle::nms(dets, 0.4);
        REQUIRE(kept.size() == expected.size());
        for (std::size_t i = 0; i < kept.size(); ++i) {
            CHECK(kept[i].box == expected[i].box);
        }
        // 0 suppresses 1 (IoU 0.6); 2 survives (IoU 1/3 with 0) and suppresses 3.
        CHECK(kept.size() == 3);
    }

    TEST_CASE("match examples")
    {
        const std::vector<GroundTruth> gts{{"i", {0, 0, 4, 4}, 1}};
        const auto one = match_detections({det("i", {0, 0, 4, 4}, 1, 0.5)}, gts, 0.5);
        CHECK(one.det_tp == std::vector<bool>{true});
        CHECK(one.gt_matched == std::vector<bool>{true});

        const auto two =
            match_detections({det("i", {0, 0, 4, 4}, 1, 0.3), det("i", {0, 0, 4, 4}, 1, 0.8)}, gts, 0.5);
        CHECK(two.det_tp == std::vector<bool>{false, true});

        // Wrong class or wrong image never matches.
        const auto miss =
            match_detections({det("i", {0, 0, 4, 4}, 2, 0.9), det("j", {0, 0, 4, 4}, 1, 0.9)}, gts, 0.5);
        CHECK(miss.det_tp == std::vector<bool>{false, false});
    }

    TEST_CASE("six detections on three ground truths against the assignment oracle")
    {
        gen::Rng rng(23);
        for (int i = 0; i < 100; ++i) {
            gen::Scene s = gen::scene(rng, 6, 3, 1, 1);
            const auto got = match_detections(s.dets, s.gts, 0.3);
            const auto expected = oracle::match(s.dets, s.gts, 0.3);
            CHECK(got.det_tp == expected.det_tp);
            CHECK(got.gt_matched == expected.gt_matched);
        }
    }

    TEST_CASE("average precision examples")
    {
        CHECK(*average_precision({true, true}, {0.9, 0.8}, 2) == 1.0);
        CHECK(*average_precision({false, false}, {0.9, 0.8}, 2) == 0.0);
        const double expected = oracle::average_precision({true, false, true}, {0.9, 0.8, 0.7}, 2);
        CHECK(expected == doctest::Approx(5.0 / 6.0));
        CHECK(*average_precision({true, false, true}, {0.9, 0.8, 0.7}, 2) == doctest::Approx(expected));
        CHECK_FALSE(average_precision({}, {}, 0).has_value());
        CHECK_THROWS_AS((void)average_precision({true}, {}, 1), ValidationError);
    }

    TEST_CASE("AP and recall are invariant under strictly monotone score transforms")
    {
        gen::Rng rng(5);
        for (int i = 0; i < 200; ++i) {
            const auto c = gen::ap_case(rng, 8);
            std::vector<double> warped;
            for (double s : c.scores) {
                warped.push_back(std::exp(3.0 * s) / 100.0 + 0.001);
            }
            CHECK(*average_precision(c.tp, warped, c.n_gt) == *average_precision(c.tp, c.scores, c.n_gt));

            auto s = gen::scene(rng, 6, 4, 2, 2);
            auto t = s.dets;
            for (auto& d : t) {
                d.score = d.score * d.score * 0.5;
            }
            CHECK(recall_at_k(s.dets, s.gts, 2, 0.5) == recall_at_k(t, s.gts, 2, 0.5));
        }
    }

    TEST_CASE("a duplicate lower-scored detection of a matched ground truth never raises AP")
    {
        gen::Rng rng(8);
        const SplitSpec split{{1}, {2}, 0};
        for (int i = 0; i < 200; ++i) {
            auto s = gen::scene(rng, 5, 3, 1, 1);
            for (auto& g : s.gts) {
                g.label = 2;
            }
            for (auto& d : s.dets) {
                d.label = 2;
            }
            const auto match = match_detections(s.dets, s.gts, 0.5);
            const auto before = evaluate(s.dets, s.gts, split, EvalMode::Zsd);
            for (std::size_t k = 0; k < s.dets.size(); ++k) {
                if (!match.det_tp[k]) {
                    continue;
                }
                auto dup = s.dets;
                Detection d = s.dets[k];
                d.score = d.score * 0.5;
                dup.push_back(d);
                CHECK(evaluate(dup, s.gts, split, EvalMode::Zsd).map_zsd <= before.map_zsd);
            }
        }
    }

    TEST_CASE("evaluate does not depend on record order")
    {
        gen::Rng rng(31);
        const SplitSpec split = split_12_34();
        for (int i = 0; i < 100; ++i) {
            auto s = continuous_scene(rng, 10, 6);
            s.gts.push_back({"img0", {0, 0, 2, 2}, 3});
            for (auto mode : {EvalMode::Zsd, EvalMode::Gzsd}) {
                const auto base = evaluate(s.dets, s.gts, split, mode);
                const auto shuffled = evaluate(gen::shuffled(s.dets, rng), gen::shuffled(s.gts, rng), split, mode);
                CHECK(base == shuffled);
            }
        }
    }

    TEST_CASE("recall at k examples")
    {
        const std::vector<GroundTruth> gts{{"i", {0, 0, 2, 2}, 3}, {"i", {10, 10, 2, 2}, 3}};
        const std::vector<Detection> dets{det("i", {0, 0, 2, 2}, 3, 0.9), det("i", {10, 10, 2, 2}, 3, 0.8)};
        CHECK(recall_at_k(dets, gts, 100, 0.5) == 1.0);
        CHECK(recall_at_k(dets, gts, 0, 0.5) == 0.0);
        CHECK(recall_at_k(dets, gts, 1, 0.5) == 0.5);
        // Per-class pooling keeps the top k of each class separately.
        auto mixed = dets;
        mixed[1].label = 4;
        auto mixed_gts = gts;
        mixed_gts[1].label = 4;
        CHECK(recall_at_k(mixed, mixed_gts, 1, 0.5, RecallPool::PerClass) == 1.0);
        CHECK(recall_at_k(mixed, mixed_gts, 1, 0.5, RecallPool::PerImage) == 0.5);
    }

    TEST_CASE("harmonic mean examples")
    {
        CHECK(std::abs(harmonic_mean(37.40, 20.10) - 26.15) <= 0.005);
        CHECK(std::abs(harmonic_mean(34.07, 12.40) - 18.18) <= 0.005);
        CHECK(harmonic_mean(0.3, 0.3) == doctest::Approx(0.3));
        CHECK(harmonic_mean(0.0, 0.7) == 0.0);
        CHECK(harmonic_mean(0.0, 0.0) == 0.0);
    }

    TEST_CASE("evaluate on a hand-computed three-image fixture")
    {
        // Seen class 1, unseen class 3.
        const SplitSpec split{{1}, {3}, 0};
        const std::vector<GroundTruth> gts{
            {"a", {0, 0, 10, 10}, 3}, {"b", {0, 0, 10, 10}, 3}, {"c", {0, 0, 10, 10}, 1}, {"c", {20, 20, 10, 10}, 3}};
        const std::vector<Detection> dets{
            det("a", {0, 0, 10, 10}, 3, 0.9),   // TP
            det("b", {50, 50, 10, 10}, 3, 0.8), // FP
            det("c", {20, 20, 10, 10}, 3, 0.7), // TP
            det("c", {0, 0, 10, 10}, 1, 0.6),   // TP (seen)
        };
        const auto zsd = evaluate(dets, gts, split, EvalMode::Zsd);
        // Unseen: ranks TP, FP, TP with 3 GT: AP = (1 + 2/3) / 3.
        CHECK(zsd.map_zsd == doctest::Approx(5.0 / 9.0));
        CHECK(zsd.recall100_zsd == doctest::Approx(2.0 / 3.0));
        CHECK(zsd.per_class_ap.size() == 1);

        const auto gzsd = evaluate(dets, gts, split, EvalMode::Gzsd);
        CHECK(gzsd.gzsd_seen_map == doctest::Approx(1.0));
        CHECK(gzsd.gzsd_unseen_map == doctest::Approx(5.0 / 9.0));
        CHECK(gzsd.gzsd_hm == doctest::Approx(harmonic_mean(1.0, 5.0 / 9.0)));
    }

    TEST_CASE("perfect and label-permuted detections")
    {
        gen::Rng rng(3);
        const SplitSpec split = split_12_34();
        std::vector<GroundTruth> gts;
        std::vector<Detection> dets;
        for (int img = 0; img < 20; ++img) {
            for (int k = 0; k < 3; ++k) {
                const Box b{k * 20.0, 0.0, 10.0, 10.0};
                const ClassId c = gen::uniform_int(rng, 1, 4);
                gts.push_back({"img" + std::to_string(img), b, c});
                dets.push_back({"img" + std::to_string(img), b, c, gen::uniform(rng, 0.1, 1.0)});
            }
        }
        const auto zsd = evaluate(dets, gts, split, EvalMode::Zsd);
        const auto gzsd = evaluate(dets, gts, split, EvalMode::Gzsd);
        CHECK(zsd.map_zsd == 1.0);
        CHECK(zsd.recall100_zsd == 1.0);
        CHECK(gzsd.gzsd_seen_map == 1.0);
        CHECK(gzsd.gzsd_unseen_map == 1.0);
        CHECK(gzsd.gzsd_hm == 1.0);

        auto permuted = dets;
        for (auto& d : permuted) {
            d.label = d.label == 3 ? 4 : (d.label == 4 ? 3 : d.label);
        }
        CHECK(evaluate(permuted, gts, split, EvalMode::Zsd).map_zsd < zsd.map_zsd);
    }

    TEST_CASE("metrics stay in the unit interval and hm agrees with its inputs")
    {
        gen::Rng rng(77);
        const SplitSpec split = split_12_34();
        for (int i = 0; i < 100; ++i) {
            auto s = gen::scene(rng, 8, 5, 2, 4);
            s.gts.push_back({"img0", {0, 0, 2, 2}, 4});
            for (auto mode : {EvalMode::Zsd, EvalMode::Gzsd}) {
                const auto r = evaluate(s.dets, s.gts, split, mode);
                for (double v : {r.map_zsd, r.recall100_zsd, r.gzsd_seen_map, r.gzsd_unseen_map, r.gzsd_hm}) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
                CHECK(r.gzsd_hm == harmonic_mean(r.gzsd_seen_map, r.gzsd_unseen_map));
            }
        }
    }

    TEST_CASE("evaluate rejects bad input")
    {
        const SplitSpec split = split_12_34();
        const std::vector<GroundTruth> gts{{"i", {0, 0, 2, 2}, 3}};
        CHECK_THROWS_AS((void)evaluate({det("i", {0, 0, 2, 2}, 9, 0.5)}, gts, split, EvalMode::Zsd), ValidationError);
        CHECK_THROWS_AS((void)evaluate({det("i", {0, 0, 2, 2}, 3, 1.5)}, gts, split, EvalMode::Zsd), ValidationError);
        CHECK_THROWS_AS((void)evaluate({}, {}, split, EvalMode::Zsd), ValidationError);
    }

    TEST_CASE("report JSON layout and detections round trip")
    {
        EvalReport r;
        r.map_zsd = 0.25;
        r.recall100_zsd = 0.5;
        r.gzsd_seen_map = 0.4;
        r.gzsd_unseen_map = 0.2;
        r.gzsd_hm = harmonic_mean(0.4, 0.2);
        r.per_class_ap[3] = 0.25;
        const auto doc = report_to_json(r);
        CHECK(doc["zsd"]["map"] == 0.25);
        CHECK(doc["zsd"]["recall100"] == 0.5);
        CHECK(doc["gzsd"]["seen"] == 0.4);
        CHECK(doc["gzsd"]["unseen"] == 0.2);
        CHECK(doc["gzsd"]["hm"] == r.gzsd_hm);
        CHECK(doc["per_class_ap"]["3"] == 0.25);

        const auto path = std::filesystem::temp_directory_path() / "zsd_test_detections.csv";
        const std::vector<Detection> dets{det("a", {1.5, 2, 3, 4}, 3, 0.125), det("b", {0, 0, 1, 1}, 1, 1.0 / 3.0)};
        save_detections(dets, path);
        const auto back = load_detections(path);
        REQUIRE(back.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(back[i].image_id == dets[i].image_id);
            CHECK(back[i].box == dets[i].box);
            CHECK(back[i].label == dets[i].label);
            CHECK(back[i].score == dets[i].score);
        }
        std::filesystem::remove(path);
    }

    TEST_CASE("oracle comparisons on randomized cases")
    {
        for (const auto& r : check::oracle_suite(99, 60)) {
            INFO(r.routine << ": " << r.first_failure);
            CHECK(r.mismatches == 0);
        }
    }
}
