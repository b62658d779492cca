#include "zsd/pipeline.hpp"
#include "zsd/error.hpp"

#include <algorithm>
#include <map>
#include <utility>

namespace zsd {

StageSeeds StageSeeds::from(std::uint64_t seed)
{
    return {derive_seed(seed, 100), derive_seed(seed, 101), derive_seed(seed, 102), derive_seed(seed, 103),
            derive_seed(seed, 104), derive_seed(seed, 105), derive_seed(seed, 106), derive_seed(seed, 107)};
}

namespace {

ClassifierTraining head_options(const RunConfig& config)
{
    return {config.cls_epochs, config.cls_lr, config.batch};
}

FeatureSet concat(FeatureSet a, const FeatureSet& b)
{
    if (a.records.empty()) {
        a.dim = b.dim;
    }
    a.records.insert(a.records.end(), b.records.begin(), b.records.end());
    return a;
}

std::vector<ClassId> seen_only(const SplitSpec& split)
{
    std::vector<ClassId> ids;
    for (ClassId id : split.seen) {
        if (id != split.background_id) {
            ids.push_back(id);
        }
    }
    return ids;
}

} // namespace

TrainedModel train_model(const TrainingData& data, const RunConfig& config)
{
    config.validate();
    data.split.validate();
    data.semantics.check_covers(data.split);
    if (data.train_seen.records.empty()) {
        throw ValidationError("training set is empty");
    }
    const StageSeeds seeds = StageSeeds::from(config.seed);
    const std::vector<ClassId> seen = seen_only(data.split);

    TrainedModel model;
    MapperTraining mopts;
    mopts.hidden = config.resolved_mapper_hidden(data.semantics.dim());
    mopts.epochs = config.mapper_epochs;
    mopts.lr = config.mapper_lr;
    mopts.batch = config.batch;
    model.mapper = train_mapper(data.train_seen, data.semantics, data.split, mopts, seeds.mapper);

    model.seen_classifier = train_classifier(data.train_seen, seen, head_options(config), seeds.seen_classifier);

    std::vector<ClassId> with_bg = seen;
    with_bg.push_back(data.split.background_id);
    FeatureSet head_train = data.train_seen;
    for (FeatureRecord r : data.train_background.records) {
        r.label = data.split.background_id;
        head_train.records.push_back(std::move(r));
    }
    model.seen_head = train_classifier(head_train, with_bg, head_options(config), seeds.seen_head);

    model.margins = margin_matrix(data.semantics, config.shrinkage, {config.margin_min, config.margin_max});
    model.synthesis = train_synthesizer(data.train_seen, data.semantics, data.split, model.margins, model.mapper,
                                        model.seen_classifier, config, seeds.synthesizer);
    return model;
}

HeadBundle build_head(const SynthesizerParams& synth, const ClassifierHead& seen_head,
                      const FeatureSet& unseen_features, const SemanticTable& table, const SplitSpec& split,
                      const RunConfig& config)
{
    split.validate();
    for (const auto& r : unseen_features.records) {
        if (!split.is_unseen(r.label)) {
            throw ValidationError("unseen feature file contains label " + std::to_string(r.label) +
                                  ", which is not an unseen class");
        }
    }
    if (unseen_features.records.empty()) {
        throw ValidationError("no unseen features to train the unseen head");
    }
    const StageSeeds seeds = StageSeeds::from(config.seed);
    const std::size_t per_class =
        std::max<std::size_t>(1, unseen_features.records.size() / split.unseen.size());

    HeadBundle bundle;
    bundle.seen_head = seen_head;
    if (config.unseen_head_mix_seen) {
        const std::vector<ClassId> seen = seen_only(split);
        FeatureSet mixed = concat(synthesize(synth, table, seen, per_class, seeds.heldout ^ 1U), unseen_features);
        std::vector<ClassId> ids = seen;
        ids.insert(ids.end(), split.unseen.begin(), split.unseen.end());
        const ClassifierHead full = train_classifier(mixed, ids, head_options(config), seeds.unseen_head);
        // Keep only the unseen rows.
        Mat w(static_cast<Eigen::Index>(split.unseen.size()), full.feature_dim());
        Vec b(static_cast<Eigen::Index>(split.unseen.size()));
        for (std::size_t i = 0; i < split.unseen.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(full.index_of(split.unseen[i]));
            w.row(static_cast<Eigen::Index>(i)) = full.weights().row(row);
            b(static_cast<Eigen::Index>(i)) = full.bias()(row);
        }
        bundle.unseen_head = ClassifierHead(split.unseen, w, b);
    } else {
        bundle.unseen_head =
            train_classifier(unseen_features, split.unseen, head_options(config), seeds.unseen_head);
    }

    if (config.calibrate) {
        std::vector<ClassId> all = seen_only(split);
        all.insert(all.end(), split.unseen.begin(), split.unseen.end());
        const std::size_t n_cal = std::max<std::size_t>(20, per_class / 5);
        const FeatureSet heldout = synthesize(synth, table, all, n_cal, seeds.calibration);
        bundle.unseen_offset = fit_calibration(bundle.seen_head, bundle.unseen_head, split, heldout);
    }
    return bundle;
}

HeadBundle build_head(const SynthesizerParams& synth, const ClassifierHead& seen_head, const SemanticTable& table,
                      const SplitSpec& split, const RunConfig& config, std::size_t n_per_class)
{
    const StageSeeds seeds = StageSeeds::from(config.seed);
    const FeatureSet unseen = synthesize(synth, table, split.unseen, n_per_class, seeds.unseen_features);
    return build_head(synth, seen_head, unseen, table, split, config);
}

ClassifierHead detection_head(const HeadBundle& bundle, const SplitSpec& split, EvalMode mode)
{
    const double offset = mode == EvalMode::Gzsd ? bundle.unseen_offset : 0.0;
    return assemble_head(bundle.seen_head, bundle.unseen_head, split, offset);
}

std::vector<Detection> detect(const HeadBundle& bundle, const FeatureSet& proposals, const SplitSpec& split,
                              EvalMode mode, const RunConfig& config)
{
    const ClassifierHead head = detection_head(bundle, split, mode);
    if (proposals.records.empty()) {
        return {};
    }
    if (proposals.dim != head.feature_dim()) {
        throw ValidationError("proposal features have dimension " + std::to_string(proposals.dim) +
                              ", head expects " + std::to_string(head.feature_dim()));
    }
    const Mat probs = classify(head, proposals.matrix());
    const auto& ids = head.class_ids();

    // Grouped by (image, class) in first-appearance order of the images.
    std::vector<std::string> image_order;
    std::map<std::string, std::map<ClassId, std::vector<Detection>>> groups;
    for (std::size_t j = 0; j < proposals.records.size(); ++j) {
        const auto& r = proposals.records[j];
        auto [it, inserted] = groups.try_emplace(r.image_id);
        if (inserted) {
            image_order.push_back(r.image_id);
        }
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const ClassId c = ids[k];
            const bool scored = mode == EvalMode::Zsd ? split.is_unseen(c) : c != split.background_id;
            const double p = probs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
            if (scored && p >= config.score_threshold) {
                it->second[c].push_back({r.image_id, r.box, c, std::min(1.0, std::max(0.0, p))});
            }
        }
    }
    std::vector<Detection> out;
    for (const auto& image : image_order) {
        for (const auto& [c, dets] : groups[image]) {
            auto kept = nms(dets, config.nms_threshold);
            out.insert(out.end(), kept.begin(), kept.end());
        }
    }
    return out;
}

EvalReport evaluate_bundle(const HeadBundle& bundle, const FeatureSet& proposals, const FeatureSet& test_objects,
                           const SplitSpec& split, const RunConfig& config)
{
    const auto gts = ground_truth_from(test_objects);
    const auto k = static_cast<std::size_t>(config.recall_k);
    const EvalReport zsd = evaluate(detect(bundle, proposals, split, EvalMode::Zsd, config), gts, split,
                                    EvalMode::Zsd, config.iou_threshold, k);
    EvalReport report = evaluate(detect(bundle, proposals, split, EvalMode::Gzsd, config), gts, split,
                                 EvalMode::Gzsd, config.iou_threshold, k);
    report.map_zsd = zsd.map_zsd;
    report.recall100_zsd = zsd.recall100_zsd;
    return report;
}

double confusion_rate(const HeadBundle& bundle, const SplitSpec& split, const FeatureSet& test_objects,
                      ClassId unseen, ClassId partner)
{
    const ClassifierHead head = detection_head(bundle, split, EvalMode::Gzsd);
    FeatureSet subset;
    subset.dim = test_objects.dim;
    for (const auto& r : test_objects.records) {
        if (r.label == unseen) {
            subset.records.push_back(r);
        }
    }
    if (subset.records.empty()) {
        throw ValidationError("no test objects of class " + std::to_string(unseen));
    }
    const Mat logits = head.logits(subset.matrix());
    const auto partner_row = static_cast<Eigen::Index>(head.index_of(partner));
    std::size_t hits = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        Eigen::Index best = 0;
        logits.col(j).maxCoeff(&best);
        hits += best == partner_row ? 1U : 0U;
    }
    return static_cast<double>(hits) / static_cast<double>(subset.records.size());
}

double heldout_cycon(const SynthesizerParams& synth, const MapperParams& mapper, const SemanticTable& table,
                     const SplitSpec& split, std::size_t n_per_class, std::uint64_t seed)
{
    const FeatureSet fake = synthesize(synth, table, split.unseen, n_per_class, seed);
    const Mat p = table.stack(fake.labels());
    return cycon_terms(mapper, fake.matrix(), p).value;
}

} // namespace zsd
