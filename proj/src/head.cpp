#include "zsd/head.hpp"
#include "zsd/error.hpp"
#include "zsd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace zsd {

ClassifierHead::ClassifierHead(std::vector<ClassId> class_ids, Mat weights, Vec bias)
    : ids_(std::move(class_ids)), w_(std::move(weights)), b_(std::move(bias))
{
    if (w_.rows() != static_cast<Eigen::Index>(ids_.size()) || b_.size() != w_.rows()) {
        throw ValidationError("classifier head: row count does not match class list");
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) {
            throw ValidationError("classifier head: duplicate class " + std::to_string(ids_[i]));
        }
    }
}

std::size_t ClassifierHead::index_of(ClassId id) const
{
    const auto it = index_.find(id);
    if (it == index_.end()) {
        throw ValidationError("classifier head has no class " + std::to_string(id));
    }
    return it->second;
}

Mat ClassifierHead::logits(const Mat& features) const
{
    if (features.rows() != w_.cols()) {
        throw ValidationError("classifier expects features of length " + std::to_string(w_.cols()));
    }
    return (w_ * features).colwise() + b_;
}

Mat softmax(const Mat& logits)
{
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double top = logits.col(c).maxCoeff();
        const Vec e = (logits.col(c).array() - top).exp();
        out.col(c) = e / e.sum();
    }
    return out;
}

Vec classify(const ClassifierHead& head, const Vec& feature)
{
    return softmax(head.logits(feature));
}

Mat classify(const ClassifierHead& head, const Mat& features)
{
    return softmax(head.logits(features));
}

double cross_entropy(const ClassifierHead& head, const Mat& features, const std::vector<std::size_t>& targets,
                     Mat* grad_w, Vec* grad_b)
{
    const Mat logits = head.logits(features);
    const auto n = logits.cols();
    Mat delta(logits.rows(), n);
    double loss = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) {
        const double top = logits.col(c).maxCoeff();
        const Vec shifted = logits.col(c).array() - top;
        const double log_z = std::log(shifted.array().exp().sum());
        const auto t = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(c)]);
        loss -= shifted[t] - log_z;
        delta.col(c) = (shifted.array() - log_z).exp();
        delta(t, c) -= 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad_w != nullptr) {
        *grad_w = delta * features.transpose() * inv_n;
    }
    if (grad_b != nullptr) {
        *grad_b = delta.rowwise().sum() * inv_n;
    }
    return loss * inv_n;
}

ClassifierHead train_classifier(const FeatureSet& features, const std::vector<ClassId>& class_ids,
                                const ClassifierTraining& options, std::uint64_t seed)
{
    if (features.empty()) {
        throw ValidationError("train_classifier: empty feature set");
    }
    std::mt19937_64 rng(derive_seed(seed, 20));
    Mat w = standard_normal(static_cast<Eigen::Index>(class_ids.size()), features.dim, rng) * 0.01;
    ClassifierHead head(class_ids, std::move(w), Vec::Zero(static_cast<Eigen::Index>(class_ids.size())));

    std::vector<std::size_t> targets;
    targets.reserve(features.size());
    for (const auto& r : features.records) {
        if (!head.contains(r.label)) {
            throw ValidationError("train_classifier: label " + std::to_string(r.label) + " is not a head class");
        }
        targets.push_back(head.index_of(r.label));
    }
    if (options.epochs == 0) {
        return head;
    }

    // Reuse the Adam implementation through a linear "network" view of (W, b).
    Mlp view = Mlp::zeros(features.dim, 1, static_cast<int>(class_ids.size()), Activation::Identity);
    view.w2 = head.weights();
    view.b2 = head.bias();
    Adam adam(view, options.lr, 0.9, 0.999);

    const Mat x = features.matrix();
    const auto n = targets.size();
    const auto batch = static_cast<std::size_t>(std::max(1, options.batch));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    MlpGrad grad = view.zero_grad();
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            std::vector<Eigen::Index> idx(len);
            std::vector<std::size_t> t(len);
            for (std::size_t i = 0; i < len; ++i) {
                idx[i] = static_cast<Eigen::Index>(order[start + i]);
                t[i] = targets[order[start + i]];
            }
            const ClassifierHead current(class_ids, view.w2, view.b2);
            cross_entropy(current, x(Eigen::all, idx), t, &grad.w2, &grad.b2);
            adam.step(view, grad);
        }
    }
    if (!view.w2.allFinite() || !view.b2.allFinite()) {
        throw NumericError("train_classifier: weights diverged");
    }
    return ClassifierHead(class_ids, view.w2, view.b2);
}

ClassifierHead assemble_head(const ClassifierHead& seen_head, const ClassifierHead& unseen_head,
                             const SplitSpec& split, double unseen_offset)
{
    if (!unseen_head.class_ids().empty() && seen_head.feature_dim() != unseen_head.feature_dim()) {
        throw ValidationError("assemble_head: heads disagree on feature dimension");
    }
    for (const auto id : unseen_head.class_ids()) {
        if (seen_head.contains(id)) {
            throw ValidationError("assemble_head: class " + std::to_string(id) + " is in both heads");
        }
    }
    std::vector<ClassId> ids;
    std::vector<std::pair<const ClassifierHead*, std::size_t>> rows;
    std::vector<double> offsets;
    for (std::size_t i = 0; i < seen_head.size(); ++i) {
        if (seen_head.class_ids()[i] != split.background_id) {
            ids.push_back(seen_head.class_ids()[i]);
            rows.emplace_back(&seen_head, i);
            offsets.push_back(0.0);
        }
    }
    for (std::size_t i = 0; i < unseen_head.size(); ++i) {
        ids.push_back(unseen_head.class_ids()[i]);
        rows.emplace_back(&unseen_head, i);
        offsets.push_back(unseen_offset);
    }
    if (seen_head.contains(split.background_id)) {
        ids.push_back(split.background_id);
        rows.emplace_back(&seen_head, seen_head.index_of(split.background_id));
        offsets.push_back(0.0);
    }
    const auto k = static_cast<Eigen::Index>(ids.size());
    Mat w(k, seen_head.feature_dim());
    Vec b(k);
    for (Eigen::Index r = 0; r < k; ++r) {
        const auto& [src, i] = rows[static_cast<std::size_t>(r)];
        w.row(r) = src->weights().row(static_cast<Eigen::Index>(i));
        b[r] = src->bias()[static_cast<Eigen::Index>(i)] + offsets[static_cast<std::size_t>(r)];
    }
    return ClassifierHead(std::move(ids), std::move(w), std::move(b));
}

double fit_calibration(const ClassifierHead& seen_head, const ClassifierHead& unseen_head, const SplitSpec& split,
                       const FeatureSet& heldout)
{
    if (heldout.empty()) {
        throw ValidationError("fit_calibration: no held-out features");
    }
    const ClassifierHead base = assemble_head(seen_head, unseen_head, split, 0.0);
    const Mat logits = base.logits(heldout.matrix());
    std::vector<bool> unseen_row(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        unseen_row[i] = split.is_unseen(base.class_ids()[i]);
    }
    std::vector<std::size_t> truth;
    for (const auto& r : heldout.records) {
        truth.push_back(base.index_of(r.label));
    }

    auto balanced_accuracy = [&](double offset) {
        std::vector<double> hits(base.size(), 0.0);
        std::vector<double> counts(base.size(), 0.0);
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            Eigen::Index best = 0;
            double best_value = -std::numeric_limits<double>::infinity();
            for (Eigen::Index r = 0; r < logits.rows(); ++r) {
                const double v = logits(r, c) + (unseen_row[static_cast<std::size_t>(r)] ? offset : 0.0);
                if (v > best_value) {
                    best_value = v;
                    best = r;
                }
            }
            const auto t = truth[static_cast<std::size_t>(c)];
            counts[t] += 1.0;
            hits[t] += static_cast<std::size_t>(best) == t ? 1.0 : 0.0;
        }
        // Mean class recall within each side, then the mean of the two sides.
        double sum[2] = {0.0, 0.0};
        int classes[2] = {0, 0};
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (counts[i] > 0.0) {
                const int side = unseen_row[i] ? 1 : 0;
                sum[side] += hits[i] / counts[i];
                ++classes[side];
            }
        }
        double total = 0.0;
        int sides = 0;
        for (int side = 0; side < 2; ++side) {
            if (classes[side] > 0) {
                total += sum[side] / classes[side];
                ++sides;
            }
        }
        return sides > 0 ? total / sides : 0.0;
    };

    // Coarse-to-fine grid; ties resolve to the offset closest to zero.
    double best_offset = 0.0;
    double best_score = balanced_accuracy(0.0);
    auto consider = [&](double offset) {
        const double score = balanced_accuracy(offset);
        if (score > best_score || (score == best_score && std::abs(offset) < std::abs(best_offset))) {
            best_score = score;
            best_offset = offset;
        }
    };
    for (int i = -80; i <= 80; ++i) {
        consider(0.25 * i);
    }
    const double center = best_offset;
    for (int i = -25; i <= 25; ++i) {
        consider(center + 0.01 * i);
    }
    return best_offset;
}

double accuracy(const ClassifierHead& head, const FeatureSet& features)
{
    if (features.empty()) {
        return 0.0;
    }
    const Mat logits = head.logits(features.matrix());
    std::size_t hits = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        Eigen::Index best = 0;
        logits.col(c).maxCoeff(&best);
        hits += head.class_ids()[static_cast<std::size_t>(best)] == features.records[static_cast<std::size_t>(c)].label;
    }
    return static_cast<double>(hits) / static_cast<double>(features.size());
}

nlohmann::json head_to_json(const ClassifierHead& head)
{
    return {{"class_ids", head.class_ids()}, {"W", matrix_to_json(head.weights())}, {"b", matrix_to_json(head.bias())}};
}

ClassifierHead head_from_json(const nlohmann::json& doc)
{
    const Mat b = matrix_from_json(doc.at("b"));
    return ClassifierHead(doc.at("class_ids").get<std::vector<ClassId>>(), matrix_from_json(doc.at("W")),
                          Eigen::Map<const Vec>(b.data(), b.size()));
}

} // namespace zsd
