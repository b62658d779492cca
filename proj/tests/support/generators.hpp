#ifndef ZSD_TESTS_GENERATORS_HPP
#define ZSD_TESTS_GENERATORS_HPP

// Hand-rolled random instance generators for property tests.

#include "zsd/eval.hpp"
#include "zsd/semantics.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace zsd::gen {

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, int lo, int hi);
double uniform(Rng& rng, double lo, double hi);

// Integer box on a small grid so that overlaps and exact IoU ties are common.
Box grid_box(Rng& rng, int grid = 8, int max_side = 4);

// Scores drawn from a coarse set so that ties occur.
double coarse_score(Rng& rng);

std::vector<ClassId> labels(Rng& rng, std::size_t n, int classes);

// n detections in one image with one class.
std::vector<Detection> single_group(Rng& rng, std::size_t n);

// Detections and ground truth spread over a few images and classes.
struct Scene {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
};
Scene scene(Rng& rng, std::size_t n_dets, std::size_t n_gts, int images, int classes);

// Ranked TP flags and scores with n_gt at least the number of TPs.
struct ApCase {
    std::vector<bool> tp;
    std::vector<double> scores;
    std::size_t n_gt = 0;
};
ApCase ap_case(Rng& rng, std::size_t max_len);

// n classes with ids 1..n in dim dimensions, entries N(0, scale^2).
SemanticTable semantic_table(Rng& rng, int n, int dim, double scale = 1.0);

template<typename T>
std::vector<T> shuffled(std::vector<T> v, Rng& rng)
{
    std::shuffle(v.begin(), v.end(), rng);
    return v;
}

} // namespace zsd::gen

#endif // ZSD_TESTS_GENERATORS_HPP
