#include "zsd/dataio.hpp"
#include "zsd/error.hpp"
#include "zsd/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

namespace zsd {

void BenchSpec::validate() const
{
    auto require = [](bool ok, const char* what) {
        if (!ok) {
            throw ValidationError(std::string("bench spec: ") + what);
        }
    };
    require(n_classes > 0 && n_unseen > 0 && d > 0 && D > 0 && images > 0, "counts must be positive");
    require(n_unseen < n_classes, "n_unseen must be smaller than n_classes");
    require(objects_min > 0 && objects_min <= objects_max, "need 0 < objects_min <= objects_max");
    require(proposal_jitter >= 0.0 && proposal_jitter <= 0.5, "proposal_jitter must lie in [0, 0.5]");
    require(background_rate >= 0.0 && background_rate < 1.0, "background_rate must lie in [0, 1)");
    require(similar_pair_count >= 0, "similar_pair_count must be non-negative");
    require(similar_pair_count <= n_unseen && similar_pair_count <= n_classes - n_unseen,
            "similar_pair_count exceeds the number of unseen or seen classes");
    require(similar_scale > 0.0, "similar_scale must be positive");
    require(semantic_rank >= 0, "semantic_rank must be non-negative");
    require(semantic_residual >= 0.0, "semantic_residual must be non-negative");
    require(feature_noise >= 0.0 && background_noise >= 0.0, "noise levels must be non-negative");
    require(proposals_per_object > 0, "proposals_per_object must be positive");
    require(image_width >= 64 && image_height >= 64, "images must be at least 64x64");
}

namespace {

class BenchSampler {
public:
    BenchSampler(const BenchSpec& spec, const Mat& visual_map, const Vec& visual_offset,
                 const SemanticTable& semantics)
        : spec_(spec), map_(visual_map), offset_(visual_offset), semantics_(semantics), rng_(derive_seed(spec.seed, 1))
    {
    }

    Vec object_feature(ClassId label)
    {
        Vec f = map_ * semantics_.vector(label) + offset_;
        for (Eigen::Index k = 0; k < f.size(); ++k) {
            f[k] += spec_.feature_noise * normal_(rng_);
        }
        return f;
    }

    Vec background_feature()
    {
        Vec f = offset_;
        for (Eigen::Index k = 0; k < f.size(); ++k) {
            f[k] += spec_.background_noise * normal_(rng_);
        }
        return f;
    }

    Box random_box()
    {
        std::uniform_real_distribution<double> side(32.0, 160.0);
        Box b;
        b.w = std::round(side(rng_));
        b.h = std::round(side(rng_));
        b.x = std::round(std::uniform_real_distribution<double>(0.0, spec_.image_width - b.w)(rng_));
        b.y = std::round(std::uniform_real_distribution<double>(0.0, spec_.image_height - b.h)(rng_));
        return b;
    }

    Box jitter(const Box& box)
    {
        const double j = spec_.proposal_jitter;
        std::uniform_real_distribution<double> u(-j, j);
        Box out;
        out.x = box.x + u(rng_) * box.w;
        out.y = box.y + u(rng_) * box.h;
        out.w = box.w * (1.0 + u(rng_));
        out.h = box.h * (1.0 + u(rng_));
        return out;
    }

    // A box overlapping no ground truth by IoU 0.3 or more, when one can be found.
    Box background_box(const std::vector<Box>& gts)
    {
        Box b = random_box();
        for (int attempt = 0; attempt < 50; ++attempt) {
            const bool clear = std::all_of(gts.begin(), gts.end(), [&](const Box& g) { return iou(b, g) < 0.3; });
            if (clear) {
                break;
            }
            b = random_box();
        }
        return b;
    }

    int object_count()
    {
        return std::uniform_int_distribution<int>(spec_.objects_min, spec_.objects_max)(rng_);
    }

    ClassId pick(const std::vector<ClassId>& ids)
    {
        return ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng_)];
    }

    int background_count(int object_proposals)
    {
        const double expected = object_proposals * spec_.background_rate / (1.0 - spec_.background_rate);
        const int whole = static_cast<int>(std::floor(expected));
        const double frac = expected - whole;
        return whole + (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < frac ? 1 : 0);
    }

private:
    const BenchSpec& spec_;
    const Mat& map_;
    const Vec& offset_;
    const SemanticTable& semantics_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

std::string image_name(const char* prefix, int index)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", prefix, index);
    return buf;
}

} // namespace

Benchmark generate_benchmark(const BenchSpec& spec)
{
    spec.validate();
    Benchmark bench;
    std::mt19937_64 rng(derive_seed(spec.seed, 0));
    std::normal_distribution<double> normal(0.0, 1.0);

    // Ids 1..n_classes; 0 is background.
    std::vector<ClassId> ids(spec.n_classes);
    std::iota(ids.begin(), ids.end(), 1);
    std::vector<ClassId> shuffled = ids;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    bench.split.unseen.assign(shuffled.begin(), shuffled.begin() + spec.n_unseen);
    bench.split.seen.assign(shuffled.begin() + spec.n_unseen, shuffled.end());
    std::sort(bench.split.unseen.begin(), bench.split.unseen.end());
    std::sort(bench.split.seen.begin(), bench.split.seen.end());
    bench.split.background_id = 0;

    // Class semantics share a low-dimensional latent structure, p = B c + residual.
    const int rank = spec.semantic_rank > 0 ? std::min(spec.semantic_rank, spec.d) : spec.d;
    Mat basis(spec.d, rank);
    const double basis_scale = 1.0 / std::sqrt(static_cast<double>(rank));
    for (int r = 0; r < spec.d; ++r) {
        for (int c = 0; c < rank; ++c) {
            basis(r, c) = normal(rng) * basis_scale;
        }
    }
    std::map<ClassId, Vec> vectors;
    for (const auto id : ids) {
        Vec code(rank);
        for (int k = 0; k < rank; ++k) {
            code[k] = normal(rng);
        }
        Vec p = basis * code;
        for (int k = 0; k < spec.d; ++k) {
            p[k] += spec.semantic_residual * normal(rng);
        }
        vectors[id] = p;
    }

    // Each engineered unseen class sits at a small fixed distance from a
    // distinct seen partner, displaced within the latent span.
    std::vector<ClassId> partners = bench.split.seen;
    std::shuffle(partners.begin(), partners.end(), rng);
    const double typical_distance =
        std::sqrt(2.0 * spec.d * (1.0 + spec.semantic_residual * spec.semantic_residual));
    for (int i = 0; i < spec.similar_pair_count; ++i) {
        const ClassId u = bench.split.unseen[static_cast<std::size_t>(i)];
        const ClassId s = partners[static_cast<std::size_t>(i)];
        Vec dir(rank);
        for (int k = 0; k < rank; ++k) {
            dir[k] = normal(rng);
        }
        const Vec step = basis * dir;
        vectors[u] = vectors[s] + step.normalized() * (spec.similar_scale * typical_distance);
        bench.similar_pairs.push_back({u, s});
    }

    bench.semantics = SemanticTable(spec.d);
    for (const auto id : ids) {
        bench.semantics.add(id, "class_" + std::to_string(id), vectors[id]);
    }

    bench.visual_map.resize(spec.D, spec.d);
    const double map_scale = 1.0 / std::sqrt(static_cast<double>(spec.d));
    for (int r = 0; r < spec.D; ++r) {
        for (int c = 0; c < spec.d; ++c) {
            bench.visual_map(r, c) = normal(rng) * map_scale;
        }
    }
    bench.visual_offset.resize(spec.D);
    for (int r = 0; r < spec.D; ++r) {
        bench.visual_offset[r] = normal(rng);
    }

    BenchSampler sampler(spec, bench.visual_map, bench.visual_offset, bench.semantics);
    for (auto* set : {&bench.train_seen, &bench.train_background, &bench.test_all, &bench.proposals_test}) {
        set->dim = spec.D;
    }

    std::vector<ClassId> all_classes = bench.split.seen;
    all_classes.insert(all_classes.end(), bench.split.unseen.begin(), bench.split.unseen.end());
    std::sort(all_classes.begin(), all_classes.end());

    for (int img = 0; img < spec.images; ++img) {
        const std::string image_id = image_name("train", img);
        const int count = sampler.object_count();
        std::vector<Box> gts;
        for (int k = 0; k < count; ++k) {
            FeatureRecord rec{image_id, sampler.random_box(), sampler.pick(bench.split.seen), {}};
            rec.feature = sampler.object_feature(rec.label);
            gts.push_back(rec.box);
            bench.train_seen.records.push_back(std::move(rec));
        }
        const int n_bg = sampler.background_count(count * spec.proposals_per_object);
        for (int k = 0; k < n_bg; ++k) {
            FeatureRecord rec{image_id, sampler.background_box(gts), bench.split.background_id,
                              sampler.background_feature()};
            bench.train_background.records.push_back(std::move(rec));
        }
    }

    for (int img = 0; img < spec.images; ++img) {
        const std::string image_id = image_name("test", img);
        const int count = sampler.object_count();
        std::vector<Box> gts;
        for (int k = 0; k < count; ++k) {
            FeatureRecord rec{image_id, sampler.random_box(), sampler.pick(all_classes), {}};
            rec.feature = sampler.object_feature(rec.label);
            gts.push_back(rec.box);
            for (int j = 0; j < spec.proposals_per_object; ++j) {
                FeatureRecord prop{image_id, sampler.jitter(rec.box), rec.label, sampler.object_feature(rec.label)};
                bench.proposals_test.records.push_back(std::move(prop));
            }
            bench.test_all.records.push_back(std::move(rec));
        }
        const int n_bg = sampler.background_count(count * spec.proposals_per_object);
        for (int k = 0; k < n_bg; ++k) {
            FeatureRecord rec{image_id, sampler.background_box(gts), bench.split.background_id,
                              sampler.background_feature()};
            bench.proposals_test.records.push_back(std::move(rec));
        }
    }
    return bench;
}

void save_benchmark(const Benchmark& bench, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    save_semantic_table(bench.semantics, dir / "semantics.csv");
    save_split(bench.split, dir / "split.json");
    save_feature_set(bench.train_seen, dir / "train_seen.csv");
    save_feature_set(bench.train_background, dir / "train_background.csv");
    save_feature_set(bench.test_all, dir / "test_all.csv");
    save_feature_set(bench.proposals_test, dir / "proposals_test.csv");
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : bench.similar_pairs) {
        pairs.push_back({{"unseen", p.unseen}, {"seen", p.seen}});
    }
    std::ofstream out(dir / "similar_pairs.json", std::ios::binary);
    out << pairs.dump() << '\n';
}

} // namespace zsd
