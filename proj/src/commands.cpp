#include "zsd/commands.hpp"
#include "zsd/checkpoint.hpp"
#include "zsd/error.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>

namespace zsd {

namespace {

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string mode_name(EvalMode m)
{
    return m == EvalMode::Zsd ? "zsd" : "gzsd";
}

std::ofstream open_out(const fs::path& path)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    return out;
}

void finish(RunManifest& m, const fs::path& out_dir)
{
    const fs::path path = out_dir / "manifest.json";
    m.outputs["manifest"] = path.string();
    save_manifest(m, path);
}

} // namespace

nlohmann::json manifest_to_json(const RunManifest& m)
{
    return {{"command", m.command},   {"config", config_to_json(m.config)}, {"arguments", m.arguments},
            {"seeds", m.seeds},       {"inputs", m.inputs},                 {"outputs", m.outputs},
            {"timings_s", m.timings_s}};
}

void save_manifest(const RunManifest& manifest, const fs::path& path)
{
    auto out = open_out(path);
    out << manifest_to_json(manifest).dump(2) << '\n';
}

DataPaths DataPaths::in(const fs::path& dir)
{
    return {dir / "semantics.csv",     dir / "split.json",   dir / "train_seen.csv", dir / "train_background.csv",
            dir / "proposals_test.csv", dir / "test_all.csv", dir / "similar_pairs.json"};
}

TrainingData load_training_data(const DataPaths& paths)
{
    TrainingData data;
    data.semantics = load_semantic_table(paths.semantics);
    data.split = load_split(paths.split);
    data.train_seen = load_feature_set(paths.train_seen);
    if (!paths.train_background.empty() && fs::exists(paths.train_background)) {
        data.train_background = load_feature_set(paths.train_background);
    } else {
        data.train_background.dim = data.train_seen.dim;
    }
    return data;
}

std::vector<SimilarPair> load_similar_pairs(const fs::path& path)
{
    std::vector<SimilarPair> pairs;
    if (path.empty() || !fs::exists(path)) {
        return pairs;
    }
    const auto doc = read_json(path);
    try {
        for (const auto& p : doc) {
            pairs.push_back({p.at("unseen").get<ClassId>(), p.at("seen").get<ClassId>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(path.string(), 0, e.what());
    }
    return pairs;
}

RunManifest cmd_synth_data(const BenchSpec& spec, const fs::path& out_dir)
{
    Stopwatch clock;
    RunManifest m;
    m.command = "synth-data";
    m.seeds["benchmark"] = spec.seed;
    m.arguments = {{"n_classes", std::to_string(spec.n_classes)},
                   {"n_unseen", std::to_string(spec.n_unseen)},
                   {"d", std::to_string(spec.d)},
                   {"D", std::to_string(spec.D)},
                   {"images", std::to_string(spec.images)},
                   {"objects_min", std::to_string(spec.objects_min)},
                   {"objects_max", std::to_string(spec.objects_max)},
                   {"proposal_jitter", format_real(spec.proposal_jitter)},
                   {"background_rate", format_real(spec.background_rate)},
                   {"similar_pair_count", std::to_string(spec.similar_pair_count)},
                   {"semantic_rank", std::to_string(spec.semantic_rank)},
                   {"semantic_residual", format_real(spec.semantic_residual)},
                   {"similar_scale", format_real(spec.similar_scale)},
                   {"background_noise", format_real(spec.background_noise)},
                   {"proposals_per_object", std::to_string(spec.proposals_per_object)},
                   {"feature_noise", format_real(spec.feature_noise)}};
    const Benchmark bench = generate_benchmark(spec);
    save_benchmark(bench, out_dir);
    const DataPaths p = DataPaths::in(out_dir);
    m.outputs = {{"semantics", p.semantics.string()},         {"split", p.split.string()},
                 {"train_seen", p.train_seen.string()},       {"train_background", p.train_background.string()},
                 {"proposals_test", p.proposals_test.string()}, {"test_all", p.test_all.string()},
                 {"similar_pairs", p.similar_pairs.string()}};
    m.timings_s["generate"] = clock.seconds();
    finish(m, out_dir);
    return m;
}

RunManifest cmd_train(const RunConfig& config, const DataPaths& data, const fs::path& out_dir)
{
    RunManifest m;
    m.command = "train";
    m.config = config;
    m.inputs = {{"semantics", data.semantics.string()},
                {"split", data.split.string()},
                {"train_seen", data.train_seen.string()},
                {"train_background", data.train_background.string()}};
    const StageSeeds s = StageSeeds::from(config.seed);
    m.seeds = {{"run", config.seed},
               {"mapper", s.mapper},
               {"seen_classifier", s.seen_classifier},
               {"seen_head", s.seen_head},
               {"synthesizer", s.synthesizer}};

    Stopwatch load_clock;
    const TrainingData td = load_training_data(data);
    m.timings_s["load"] = load_clock.seconds();
    Stopwatch train_clock;
    const TrainedModel model = train_model(td, config);
    m.timings_s["train"] = train_clock.seconds();

    fs::create_directories(out_dir);
    m.outputs = {{"mapper", (out_dir / "mapper.json").string()},
                 {"seen_classifier", (out_dir / "seen_classifier.json").string()},
                 {"seen_head", (out_dir / "seen_head.json").string()},
                 {"margins", (out_dir / "margins.csv").string()},
                 {"synthesizer", (out_dir / "synthesizer.json").string()},
                 {"loss_log", (out_dir / "loss_log.csv").string()}};
    save_mapper(model.mapper, out_dir / "mapper.json");
    save_head(model.seen_classifier, out_dir / "seen_classifier.json");
    save_head(model.seen_head, out_dir / "seen_head.json");
    save_margin_matrix(model.margins, out_dir / "margins.csv");
    save_synthesizer(model.synthesis.params, out_dir / "synthesizer.json");
    save_loss_log(model.synthesis.log, out_dir / "loss_log.csv");
    finish(m, out_dir);
    return m;
}

RunManifest cmd_generate(const RunConfig& config, const fs::path& synthesizer, const DataPaths& data,
                         std::size_t n_per_class, const std::vector<ClassId>& classes, const fs::path& out_dir)
{
    if (n_per_class == 0) {
        throw ValidationError("n_per_class must be positive");
    }
    Stopwatch clock;
    RunManifest m;
    m.command = "generate";
    m.config = config;
    m.inputs = {{"synthesizer", synthesizer.string()},
                {"semantics", data.semantics.string()},
                {"split", data.split.string()}};
    m.arguments["n_per_class"] = std::to_string(n_per_class);
    const SynthesizerParams synth = load_synthesizer(synthesizer);
    const SemanticTable table = load_semantic_table(data.semantics);
    const SplitSpec split = load_split(data.split);
    std::vector<ClassId> ids = classes.empty() ? split.unseen : classes;
    std::string listed;
    for (ClassId id : ids) {
        if (!table.contains(id)) {
            throw ValidationError("class " + std::to_string(id) + " has no semantic vector");
        }
        listed += (listed.empty() ? "" : ",") + std::to_string(id);
    }
    m.arguments["classes"] = listed;
    const std::uint64_t seed = StageSeeds::from(config.seed).unseen_features;
    m.seeds = {{"run", config.seed}, {"features", seed}};
    const FeatureSet features = synthesize(synth, table, ids, n_per_class, seed);
    const fs::path out = out_dir / "features.csv";
    save_feature_set(features, out);
    m.outputs["features"] = out.string();
    m.timings_s["generate"] = clock.seconds();
    finish(m, out_dir);
    return m;
}

std::vector<SweepRow> run_sweep(const SynthesizerParams& synth, const ClassifierHead& seen_head,
                                const SemanticTable& table, const SplitSpec& split, const FeatureSet& proposals,
                                const FeatureSet& test_objects, const RunConfig& config,
                                const std::vector<std::size_t>& counts)
{
    std::vector<SweepRow> rows;
    for (std::size_t n : counts) {
        if (n == 0) {
            throw ValidationError("sweep counts must be positive");
        }
        const HeadBundle bundle = build_head(synth, seen_head, table, split, config, n);
        rows.push_back({n, evaluate_bundle(bundle, proposals, test_objects, split, config)});
    }
    return rows;
}

void save_sweep(const std::vector<SweepRow>& rows, const fs::path& path)
{
    auto out = open_out(path);
    out << "n_per_class,zsd_map,recall100,gzsd_seen,gzsd_unseen,gzsd_hm\n";
    for (const auto& r : rows) {
        out << r.n_per_class << ',' << format_real(r.report.map_zsd) << ',' << format_real(r.report.recall100_zsd)
            << ',' << format_real(r.report.gzsd_seen_map) << ',' << format_real(r.report.gzsd_unseen_map) << ','
            << format_real(r.report.gzsd_hm) << '\n';
    }
}

RunManifest cmd_generate_sweep(const RunConfig& config, const fs::path& synthesizer, const fs::path& seen_head,
                               const DataPaths& data, const std::vector<std::size_t>& counts,
                               const fs::path& out_dir)
{
    if (counts.empty()) {
        throw ValidationError("sweep needs at least one count");
    }
    RunManifest m;
    m.command = "generate --sweep";
    m.config = config;
    m.inputs = {{"synthesizer", synthesizer.string()},
                {"seen_head", seen_head.string()},
                {"semantics", data.semantics.string()},
                {"split", data.split.string()},
                {"proposals_test", data.proposals_test.string()},
                {"test_all", data.test_all.string()}};
    std::string listed;
    for (std::size_t n : counts) {
        listed += (listed.empty() ? "" : ",") + std::to_string(n);
    }
    m.arguments["sweep"] = listed;
    const StageSeeds s = StageSeeds::from(config.seed);
    m.seeds = {{"run", config.seed}, {"features", s.unseen_features}, {"calibration", s.calibration}};

    const SynthesizerParams synth = load_synthesizer(synthesizer);
    const ClassifierHead seen = load_head(seen_head);
    const SemanticTable table = load_semantic_table(data.semantics);
    const SplitSpec split = load_split(data.split);
    const FeatureSet proposals = load_feature_set(data.proposals_test);
    const FeatureSet test_objects = load_feature_set(data.test_all);

    std::vector<SweepRow> rows;
    for (std::size_t n : counts) {
        if (n == 0) {
            throw ValidationError("sweep counts must be positive");
        }
        Stopwatch clock;
        const FeatureSet features = synthesize(synth, table, split.unseen, n, s.unseen_features);
        const HeadBundle bundle = build_head(synth, seen, features, table, split, config);
        rows.push_back({n, evaluate_bundle(bundle, proposals, test_objects, split, config)});
        const std::string tag = "n" + std::to_string(n);
        save_feature_set(features, out_dir / ("features_" + tag + ".csv"));
        save_head_bundle(bundle, split, out_dir / ("head_" + tag + ".json"));
        m.outputs["features_" + tag] = (out_dir / ("features_" + tag + ".csv")).string();
        m.outputs["head_" + tag] = (out_dir / ("head_" + tag + ".json")).string();
        m.timings_s[tag] = clock.seconds();
    }
    save_sweep(rows, out_dir / "sweep.csv");
    m.outputs["sweep"] = (out_dir / "sweep.csv").string();
    finish(m, out_dir);
    return m;
}

RunManifest cmd_build_head(const RunConfig& config, const fs::path& synthesizer, const fs::path& seen_head,
                           const fs::path& unseen_features, const DataPaths& data, const fs::path& out_dir)
{
    Stopwatch clock;
    RunManifest m;
    m.command = "build-head";
    m.config = config;
    m.inputs = {{"synthesizer", synthesizer.string()},
                {"seen_head", seen_head.string()},
                {"features", unseen_features.string()},
                {"semantics", data.semantics.string()},
                {"split", data.split.string()}};
    const StageSeeds s = StageSeeds::from(config.seed);
    m.seeds = {{"run", config.seed}, {"unseen_head", s.unseen_head}, {"calibration", s.calibration}};
    const SynthesizerParams synth = load_synthesizer(synthesizer);
    const ClassifierHead seen = load_head(seen_head);
    const FeatureSet features = load_feature_set(unseen_features);
    const SemanticTable table = load_semantic_table(data.semantics);
    const SplitSpec split = load_split(data.split);
    const HeadBundle bundle = build_head(synth, seen, features, table, split, config);
    save_head_bundle(bundle, split, out_dir / "head.json");
    m.outputs["head"] = (out_dir / "head.json").string();
    m.timings_s["build"] = clock.seconds();
    finish(m, out_dir);
    return m;
}

RunManifest cmd_evaluate(const RunConfig& config, const fs::path& head, const DataPaths& data,
                         const std::vector<EvalMode>& modes, const fs::path& out_dir)
{
    if (modes.empty()) {
        throw ValidationError("no evaluation mode requested");
    }
    Stopwatch clock;
    RunManifest m;
    m.command = "evaluate";
    m.config = config;
    m.inputs = {{"head", head.string()},
                {"split", data.split.string()},
                {"proposals_test", data.proposals_test.string()},
                {"test_all", data.test_all.string()}};
    const HeadBundle bundle = load_head_bundle(head);
    const SplitSpec split = load_split(data.split);
    const FeatureSet proposals = load_feature_set(data.proposals_test);
    const auto gts = ground_truth_from(load_feature_set(data.test_all));
    const auto k = static_cast<std::size_t>(config.recall_k);

    EvalReport report;
    report.iou_threshold = config.iou_threshold;
    std::string listed;
    for (EvalMode mode : modes) {
        const auto dets = detect(bundle, proposals, split, mode, config);
        const fs::path det_path = out_dir / ("detections_" + mode_name(mode) + ".csv");
        save_detections(dets, det_path);
        m.outputs["detections_" + mode_name(mode)] = det_path.string();
        const EvalReport r = evaluate(dets, gts, split, mode, config.iou_threshold, k);
        if (mode == EvalMode::Zsd) {
            report.map_zsd = r.map_zsd;
            report.recall100_zsd = r.recall100_zsd;
        } else {
            report.gzsd_seen_map = r.gzsd_seen_map;
            report.gzsd_unseen_map = r.gzsd_unseen_map;
            report.gzsd_hm = r.gzsd_hm;
        }
        // GZSD covers every class, so its APs win when both modes run.
        for (const auto& [c, ap] : r.per_class_ap) {
            report.per_class_ap[c] = ap;
        }
        listed += (listed.empty() ? "" : ",") + mode_name(mode);
    }
    m.arguments["mode"] = listed;
    save_report(report, out_dir / "report.json");
    m.outputs["report"] = (out_dir / "report.json").string();
    m.timings_s["evaluate"] = clock.seconds();
    finish(m, out_dir);
    return m;
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const TrainingData& data,
                                      const FeatureSet& proposals, const FeatureSet& test_objects,
                                      const std::vector<SimilarPair>& pairs, const std::vector<LossMask>& masks,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::optional<fs::path>& run_dir)
{
    if (masks.empty() || seeds.empty()) {
        throw ValidationError("ablation needs at least one mask and one seed");
    }
    std::vector<AblationRow> rows;
    for (const LossMask& mask : masks) {
        if (!mask.wgan) {
            throw ValidationError("the WGAN term cannot be disabled");
        }
        for (std::uint64_t seed : seeds) {
            RunConfig run = config;
            run.losses = mask;
            run.seed = seed;
            const TrainedModel model = train_model(data, run);
            const HeadBundle bundle = build_head(model.synthesis.params, model.seen_head, data.semantics, data.split,
                                                 run, static_cast<std::size_t>(run.n_per_class));
            AblationRow row;
            row.mask = mask.name();
            row.seed = seed;
            row.report = evaluate_bundle(bundle, proposals, test_objects, data.split, run);
            for (const auto& p : pairs) {
                row.confusion += confusion_rate(bundle, data.split, test_objects, p.unseen, p.seen);
            }
            if (!pairs.empty()) {
                row.confusion /= static_cast<double>(pairs.size());
            }
            row.cycon_unseen = heldout_cycon(model.synthesis.params, model.mapper, data.semantics, data.split, 200,
                                             derive_seed(seed, 108));
            if (run_dir) {
                const fs::path dir = *run_dir / (row.mask + "_seed" + std::to_string(seed));
                save_mapper(model.mapper, dir / "mapper.json");
                save_head(model.seen_classifier, dir / "seen_classifier.json");
                save_head(model.seen_head, dir / "seen_head.json");
                save_margin_matrix(model.margins, dir / "margins.csv");
                save_synthesizer(model.synthesis.params, dir / "synthesizer.json");
                save_loss_log(model.synthesis.log, dir / "loss_log.csv");
                save_head_bundle(bundle, data.split, dir / "head.json");
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

namespace {

constexpr std::size_t kAblationColumns = 7;

std::array<double, kAblationColumns> ablation_values(const AblationRow& r)
{
    return {r.report.map_zsd,  r.report.recall100_zsd, r.report.gzsd_seen_map, r.report.gzsd_unseen_map,
            r.report.gzsd_hm, r.confusion,             r.cycon_unseen};
}

// Rows grouped by mask, in first-appearance order.
std::vector<std::pair<std::string, std::vector<const AblationRow*>>> group_by_mask(
    const std::vector<AblationRow>& rows)
{
    std::vector<std::pair<std::string, std::vector<const AblationRow*>>> groups;
    for (const auto& r : rows) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r.mask; });
        if (it == groups.end()) {
            groups.push_back({r.mask, {}});
            it = std::prev(groups.end());
        }
        it->second.push_back(&r);
    }
    return groups;
}

std::pair<double, double> mean_sd(const std::vector<double>& xs)
{
    double mean = 0.0;
    for (double x : xs) {
        mean += x;
    }
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    return {mean, sd};
}

} // namespace

std::vector<AblationSummary> summarize(const std::vector<AblationRow>& rows)
{
    std::vector<AblationSummary> out;
    for (const auto& [mask, group] : group_by_mask(rows)) {
        std::vector<double> maps;
        std::vector<double> confusion;
        std::vector<double> cycon;
        for (const AblationRow* r : group) {
            maps.push_back(r->report.map_zsd);
            confusion.push_back(r->confusion);
            cycon.push_back(r->cycon_unseen);
        }
        const auto [m, sd] = mean_sd(maps);
        out.push_back({mask, m, sd, mean_sd(confusion).first, mean_sd(cycon).first});
    }
    return out;
}

void save_ablation(const std::vector<AblationRow>& rows, const fs::path& path)
{
    auto out = open_out(path);
    out << "mask,seed,zsd_map,recall100,gzsd_seen,gzsd_unseen,gzsd_hm,confusion,cycon_unseen\n";
    for (const auto& r : rows) {
        out << r.mask << ',' << r.seed;
        for (double v : ablation_values(r)) {
            out << ',' << format_real(v);
        }
        out << '\n';
    }
    for (const auto& [mask, group] : group_by_mask(rows)) {
        std::array<std::vector<double>, kAblationColumns> columns;
        for (const AblationRow* r : group) {
            const auto values = ablation_values(*r);
            for (std::size_t c = 0; c < kAblationColumns; ++c) {
                columns[c].push_back(values[c]);
            }
        }
        out << mask << ",mean";
        for (const auto& col : columns) {
            out << ',' << format_real(mean_sd(col).first);
        }
        out << '\n' << mask << ",sd";
        for (const auto& col : columns) {
            out << ',' << format_real(mean_sd(col).second);
        }
        out << '\n';
    }
}

RunManifest cmd_ablate(const RunConfig& config, const DataPaths& data, const std::vector<LossMask>& masks,
                       const std::vector<std::uint64_t>& seeds, const fs::path& out_dir)
{
    Stopwatch clock;
    RunManifest m;
    m.command = "ablate";
    m.config = config;
    m.inputs = {{"semantics", data.semantics.string()},
                {"split", data.split.string()},
                {"train_seen", data.train_seen.string()},
                {"train_background", data.train_background.string()},
                {"proposals_test", data.proposals_test.string()},
                {"test_all", data.test_all.string()},
                {"similar_pairs", data.similar_pairs.string()}};
    std::string mask_list;
    for (const auto& mask : masks) {
        mask_list += (mask_list.empty() ? "" : ",") + mask.name();
    }
    std::string seed_list;
    for (std::uint64_t s : seeds) {
        seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
        m.seeds["run_" + std::to_string(s)] = s;
    }
    m.arguments = {{"masks", mask_list}, {"seeds", seed_list}};

    const TrainingData td = load_training_data(data);
    const FeatureSet proposals = load_feature_set(data.proposals_test);
    const FeatureSet test_objects = load_feature_set(data.test_all);
    const auto pairs = load_similar_pairs(data.similar_pairs);
    const auto rows = run_ablation(config, td, proposals, test_objects, pairs, masks, seeds, out_dir / "runs");
    save_ablation(rows, out_dir / "ablation.csv");
    m.outputs["ablation"] = (out_dir / "ablation.csv").string();
    m.outputs["runs"] = (out_dir / "runs").string();
    m.timings_s["ablate"] = clock.seconds();
    finish(m, out_dir);
    return m;
}

} // namespace zsd
