#ifndef ZSD_SEMANTICS_HPP
#define ZSD_SEMANTICS_HPP

#include "zsd/dataio.hpp"
#include "zsd/types.hpp"

#include <filesystem>
#include <unordered_map>
#include <utility>
#include <vector>

namespace zsd {

struct MarginRange {
    double min = 0.1;
    double max = 1.0;
};

// Symmetric per-class-pair triplet margins. Immutable once built.
class MarginMatrix {
public:
    MarginMatrix() = default;
    MarginMatrix(std::vector<ClassId> class_ids, Mat values, MarginRange range);

    [[nodiscard]] double margin(ClassId anchor, ClassId negative) const;
    [[nodiscard]] bool contains(ClassId id) const { return index_.count(id) != 0; }
    [[nodiscard]] std::size_t index_of(ClassId id) const;

    [[nodiscard]] const std::vector<ClassId>& class_ids() const noexcept { return ids_; }
    [[nodiscard]] const Mat& values() const noexcept { return values_; }
    [[nodiscard]] MarginRange range() const noexcept { return range_; }

private:
    std::vector<ClassId> ids_;
    Mat values_;
    MarginRange range_;
    std::unordered_map<ClassId, std::size_t> index_;
};

// Population covariance (denominator n) of all class vectors, shrunk towards
// (tr / d) * I by the given amount.
Mat covariance_of_semantics(const SemanticTable& table, double shrinkage);

// Pairwise Mahalanobis distances under the shrunk covariance, rows and
// columns in ascending class-id order.
Mat mahalanobis_distances(const SemanticTable& table, double shrinkage);

// Off-diagonal distances min-max rescaled into the range; zero diagonal.
MarginMatrix margin_matrix(const SemanticTable& table, double shrinkage, MarginRange range = {});

void save_margin_matrix(const MarginMatrix& mm, const std::filesystem::path& path);
MarginMatrix load_margin_matrix(const std::filesystem::path& path);

} // namespace zsd

#endif // ZSD_SEMANTICS_HPP
