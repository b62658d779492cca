#ifndef ZSD_HEAD_HPP
#define ZSD_HEAD_HPP

#include "zsd/dataio.hpp"
#include "zsd/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <vector>

namespace zsd {

// Linear softmax classifier: p = softmax(W f + b), one row per class.
class ClassifierHead {
public:
    ClassifierHead() = default;
    ClassifierHead(std::vector<ClassId> class_ids, Mat weights, Vec bias);

    [[nodiscard]] const std::vector<ClassId>& class_ids() const noexcept { return ids_; }
    [[nodiscard]] const Mat& weights() const noexcept { return w_; }
    [[nodiscard]] const Vec& bias() const noexcept { return b_; }
    [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
    [[nodiscard]] int feature_dim() const { return static_cast<int>(w_.cols()); }
    [[nodiscard]] bool contains(ClassId id) const { return index_.count(id) != 0; }
    [[nodiscard]] std::size_t index_of(ClassId id) const;

    // K x n logits for a D x n batch.
    [[nodiscard]] Mat logits(const Mat& features) const;

    friend bool operator==(const ClassifierHead& a, const ClassifierHead& b)
    {
        return a.ids_ == b.ids_ && a.w_ == b.w_ && a.b_ == b.b_;
    }

private:
    std::vector<ClassId> ids_;
    Mat w_;
    Vec b_;
    std::unordered_map<ClassId, std::size_t> index_;
};

// Column-wise numerically stable softmax.
Mat softmax(const Mat& logits);

Vec classify(const ClassifierHead& head, const Vec& feature);
Mat classify(const ClassifierHead& head, const Mat& features);

struct ClassifierTraining {
    int epochs = 30;
    double lr = 0.001;
    int batch = 128;
};

// Mean cross-entropy and its gradient with respect to W and b.
double cross_entropy(const ClassifierHead& head, const Mat& features, const std::vector<std::size_t>& targets,
                     Mat* grad_w = nullptr, Vec* grad_b = nullptr);

// Small seeded Gaussian initialization followed by Adam on cross-entropy.
ClassifierHead train_classifier(const FeatureSet& features, const std::vector<ClassId>& class_ids,
                                const ClassifierTraining& options, std::uint64_t seed);

// Rows ordered seen, unseen, background. The offset is added to every
// unseen logit.
ClassifierHead assemble_head(const ClassifierHead& seen_head, const ClassifierHead& unseen_head,
                             const SplitSpec& split, double unseen_offset = 0.0);

// Grid search for the unseen offset maximizing balanced accuracy on held-out
// features: mean class recall within the seen and within the unseen side,
// averaged over the two sides.
double fit_calibration(const ClassifierHead& seen_head, const ClassifierHead& unseen_head, const SplitSpec& split,
                       const FeatureSet& heldout);

double accuracy(const ClassifierHead& head, const FeatureSet& features);

nlohmann::json head_to_json(const ClassifierHead& head);
ClassifierHead head_from_json(const nlohmann::json& doc);

} // namespace zsd

#endif // ZSD_HEAD_HPP
