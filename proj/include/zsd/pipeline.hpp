#ifndef ZSD_PIPELINE_HPP
#define ZSD_PIPELINE_HPP

#include "zsd/checkpoint.hpp"
#include "zsd/config.hpp"
#include "zsd/dataio.hpp"
#include "zsd/eval.hpp"
#include "zsd/head.hpp"
#include "zsd/mapper.hpp"
#include "zsd/semantics.hpp"
#include "zsd/synthesizer.hpp"

#include <cstdint>
#include <vector>

namespace zsd {

struct TrainingData {
    SemanticTable semantics;
    SplitSpec split;
    FeatureSet train_seen;
    FeatureSet train_background;
};

struct TrainedModel {
    MapperParams mapper;
    ClassifierHead seen_classifier; // seen classes only; drives the classification loss
    ClassifierHead seen_head;       // seen classes plus background; used at detection time
    MarginMatrix margins;
    SynthesisResult synthesis;
};

// Stage seeds derived from one run seed.
struct StageSeeds {
    std::uint64_t mapper;
    std::uint64_t seen_classifier;
    std::uint64_t seen_head;
    std::uint64_t synthesizer;
    std::uint64_t unseen_features;
    std::uint64_t unseen_head;
    std::uint64_t calibration;
    std::uint64_t heldout;

    static StageSeeds from(std::uint64_t seed);
};

// Mapper, seen classifier, seen head, margin matrix, synthesizer.
TrainedModel train_model(const TrainingData& data, const RunConfig& config);

// Unseen head trained on unseen features (plus synthesized seen features
// when config.unseen_head_mix_seen), calibrated on a fresh synthesized
// held-out set of seen and unseen features.
HeadBundle build_head(const SynthesizerParams& synth, const ClassifierHead& seen_head,
                      const FeatureSet& unseen_features, const SemanticTable& table, const SplitSpec& split,
                      const RunConfig& config);
HeadBundle build_head(const SynthesizerParams& synth, const ClassifierHead& seen_head, const SemanticTable& table,
                      const SplitSpec& split, const RunConfig& config, std::size_t n_per_class);

// Assembled head for a mode: ZSD uses no offset, GZSD the calibrated one.
ClassifierHead detection_head(const HeadBundle& bundle, const SplitSpec& split, EvalMode mode);

// Scores every proposal with the assembled head, keeps classes scored in the
// mode whose probability reaches the score threshold, and applies NMS per
// (image, class).
std::vector<Detection> detect(const HeadBundle& bundle, const FeatureSet& proposals, const SplitSpec& split,
                              EvalMode mode, const RunConfig& config);

// ZSD and GZSD fields of one report. per_class_ap holds the GZSD APs.
EvalReport evaluate_bundle(const HeadBundle& bundle, const FeatureSet& proposals, const FeatureSet& test_objects,
                           const SplitSpec& split, const RunConfig& config);

// Fraction of the unseen class's test objects whose argmax under the GZSD
// head is the seen partner.
double confusion_rate(const HeadBundle& bundle, const SplitSpec& split, const FeatureSet& test_objects,
                      ClassId unseen, ClassId partner);

// Mean ||p - M(f)||^2 over freshly generated unseen features.
double heldout_cycon(const SynthesizerParams& synth, const MapperParams& mapper, const SemanticTable& table,
                     const SplitSpec& split, std::size_t n_per_class, std::uint64_t seed);

} // namespace zsd

#endif // ZSD_PIPELINE_HPP
