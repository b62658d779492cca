#ifndef ZSD_COMMANDS_HPP
#define ZSD_COMMANDS_HPP

#include "zsd/config.hpp"
#include "zsd/dataio.hpp"
#include "zsd/eval.hpp"
#include "zsd/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace zsd {

namespace fs = std::filesystem;

// Written next to the outputs of every command as manifest.json.
struct RunManifest {
    std::string command;
    RunConfig config;
    std::map<std::string, std::string> arguments;
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::map<std::string, double> timings_s;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);
void save_manifest(const RunManifest& manifest, const fs::path& path);

struct DataPaths {
    fs::path semantics;
    fs::path split;
    fs::path train_seen;
    fs::path train_background;
    fs::path proposals_test;
    fs::path test_all;
    fs::path similar_pairs;

    // The file names written by synth-data.
    static DataPaths in(const fs::path& dir);
};

TrainingData load_training_data(const DataPaths& paths);
std::vector<SimilarPair> load_similar_pairs(const fs::path& path);

RunManifest cmd_synth_data(const BenchSpec& spec, const fs::path& out_dir);

// mapper.json, seen_classifier.json, seen_head.json, margins.csv,
// synthesizer.json, loss_log.csv.
RunManifest cmd_train(const RunConfig& config, const DataPaths& data, const fs::path& out_dir);

// Unseen features (or the given classes) from a synthesizer checkpoint.
RunManifest cmd_generate(const RunConfig& config, const fs::path& synthesizer, const DataPaths& data,
                         std::size_t n_per_class, const std::vector<ClassId>& classes, const fs::path& out_dir);

struct SweepRow {
    std::size_t n_per_class = 0;
    EvalReport report;
};

std::vector<SweepRow> run_sweep(const SynthesizerParams& synth, const ClassifierHead& seen_head,
                                const SemanticTable& table, const SplitSpec& split, const FeatureSet& proposals,
                                const FeatureSet& test_objects, const RunConfig& config,
                                const std::vector<std::size_t>& counts);
void save_sweep(const std::vector<SweepRow>& rows, const fs::path& path);

// features_n<N>.csv and head_n<N>.json per count plus sweep.csv.
RunManifest cmd_generate_sweep(const RunConfig& config, const fs::path& synthesizer, const fs::path& seen_head,
                               const DataPaths& data, const std::vector<std::size_t>& counts,
                               const fs::path& out_dir);

RunManifest cmd_build_head(const RunConfig& config, const fs::path& synthesizer, const fs::path& seen_head,
                           const fs::path& unseen_features, const DataPaths& data, const fs::path& out_dir);

// Modes evaluated; the report holds the fields of every requested mode.
RunManifest cmd_evaluate(const RunConfig& config, const fs::path& head, const DataPaths& data,
                         const std::vector<EvalMode>& modes, const fs::path& out_dir);

struct AblationRow {
    std::string mask;
    std::uint64_t seed = 0;
    EvalReport report;
    double confusion = 0.0;    // mean over engineered pairs
    double cycon_unseen = 0.0; // held-out generated unseen features
};

struct AblationSummary {
    std::string mask;
    double mean_unseen_map = 0.0;
    double sd_unseen_map = 0.0;
    double mean_confusion = 0.0;
    double mean_cycon_unseen = 0.0;
};

// One full pipeline run per mask per seed. When run_dir is set each run's
// checkpoints are written under run_dir/<mask>_seed<seed>/.
std::vector<AblationRow> run_ablation(const RunConfig& config, const TrainingData& data,
                                      const FeatureSet& proposals, const FeatureSet& test_objects,
                                      const std::vector<SimilarPair>& pairs, const std::vector<LossMask>& masks,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::optional<fs::path>& run_dir = std::nullopt);
std::vector<AblationSummary> summarize(const std::vector<AblationRow>& rows);
void save_ablation(const std::vector<AblationRow>& rows, const fs::path& path);

RunManifest cmd_ablate(const RunConfig& config, const DataPaths& data, const std::vector<LossMask>& masks,
                       const std::vector<std::uint64_t>& seeds, const fs::path& out_dir);

} // namespace zsd

#endif // ZSD_COMMANDS_HPP
