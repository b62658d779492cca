#ifndef ZSD_DATAIO_HPP
#define ZSD_DATAIO_HPP

#include "zsd/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace zsd {

// Seen/unseen label partition plus the background label.
struct SplitSpec {
    std::vector<ClassId> seen;
    std::vector<ClassId> unseen;
    ClassId background_id = 0;

    // Throws ValidationError on overlap, empty lists, negative ids or a
    // background id that also appears in either list.
    void validate() const;

    [[nodiscard]] bool is_seen(ClassId id) const;
    [[nodiscard]] bool is_unseen(ClassId id) const;
    [[nodiscard]] bool contains(ClassId id) const { return is_seen(id) || is_unseen(id) || id == background_id; }

    friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

// Class id -> (name, semantic vector). Iteration order is ascending id.
class SemanticTable {
public:
    struct Entry {
        std::string name;
        Vec vector;
    };

    SemanticTable() = default;
    explicit SemanticTable(int dim);

    void add(ClassId id, std::string name, Vec vector);

    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool contains(ClassId id) const { return entries_.count(id) != 0; }
    [[nodiscard]] const Vec& vector(ClassId id) const;
    [[nodiscard]] const std::string& name(ClassId id) const;
    [[nodiscard]] std::vector<ClassId> ids() const;
    [[nodiscard]] const std::map<ClassId, Entry>& entries() const noexcept { return entries_; }

    // d x n matrix, one column per requested id.
    [[nodiscard]] Mat stack(const std::vector<ClassId>& ids) const;

    // Every seen and unseen id of the split must have an entry.
    void check_covers(const SplitSpec& split) const;

    friend bool operator==(const SemanticTable& a, const SemanticTable& b);

private:
    int dim_ = 0;
    std::map<ClassId, Entry> entries_;
};

struct FeatureRecord {
    std::string image_id;
    Box box;
    ClassId label = 0;
    Vec feature;
};

struct FeatureSet {
    int dim = 0;
    std::vector<FeatureRecord> records;

    [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
    [[nodiscard]] bool empty() const noexcept { return records.empty(); }
    // D x n matrix of features in record order.
    [[nodiscard]] Mat matrix() const;
    [[nodiscard]] std::vector<ClassId> labels() const;
};

bool operator==(const FeatureSet& a, const FeatureSet& b);

SemanticTable load_semantic_table(const std::filesystem::path& path);
void save_semantic_table(const SemanticTable& table, const std::filesystem::path& path);

FeatureSet load_feature_set(const std::filesystem::path& path);
void save_feature_set(const FeatureSet& features, const std::filesystem::path& path);

SplitSpec load_split(const std::filesystem::path& path);
void save_split(const SplitSpec& split, const std::filesystem::path& path);

// Shortest decimal form that parses back to the same double.
std::string format_real(double value);

// ---------------------------------------------------------------------------
// Synthetic benchmark

struct BenchSpec {
    int n_classes = 16;
    int n_unseen = 4;
    int d = 16;
    int D = 64;
    int images = 200;
    int objects_min = 2;
    int objects_max = 4;
    double proposal_jitter = 0.1;
    double background_rate = 0.3;
    int similar_pair_count = 2;
    std::uint64_t seed = 0;

    // Semantic vectors are B c + residual noise with c of this dimension;
    // 0 means full rank.
    int semantic_rank = 6;
    double semantic_residual = 0.1;
    // Distance of an engineered unseen class from its seen partner, as a
    // fraction of the expected distance between two random classes.
    double similar_scale = 0.15;
    // Per-dimension standard deviation of object features around their class mean.
    double feature_noise = 1.0;
    double background_noise = 1.5;
    int proposals_per_object = 2;
    int image_width = 640;
    int image_height = 480;

    void validate() const;
};

struct SimilarPair {
    ClassId unseen;
    ClassId seen;
};

struct Benchmark {
    SemanticTable semantics;
    SplitSpec split;
    FeatureSet train_seen;        // seen-class objects only
    FeatureSet train_background;  // background proposals from training images
    FeatureSet test_all;          // ground-truth objects, seen and unseen
    FeatureSet proposals_test;    // jittered object proposals plus background proposals
    std::vector<SimilarPair> similar_pairs;
    // Class-conditional feature mean is visual_map * p + visual_offset.
    Mat visual_map;
    Vec visual_offset;
};

Benchmark generate_benchmark(const BenchSpec& spec);

// Writes the five benchmark files plus a similar-pairs manifest into dir.
void save_benchmark(const Benchmark& bench, const std::filesystem::path& dir);

} // namespace zsd

#endif // ZSD_DATAIO_HPP
