#include "zsd/commands.hpp"
#include "zsd/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace zsd;

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string preset = "paper";
    std::vector<std::string> overrides;
    std::string out_dir = ".";
};

struct DataFlags {
    std::string dir;
    std::string semantics;
    std::string split;
    std::string train_seen;
    std::string train_background;
    std::string proposals;
    std::string test;
    std::string similar_pairs;

    void add(CLI::App* app)
    {
        app->add_option("--data-dir", dir, "Directory written by synth-data");
        app->add_option("--semantics", semantics, "Semantic table CSV");
        app->add_option("--split", split, "Split JSON");
        app->add_option("--train-seen", train_seen, "Seen training features CSV");
        app->add_option("--train-background", train_background, "Background training proposals CSV");
        app->add_option("--proposals", proposals, "Test proposals CSV");
        app->add_option("--test", test, "Test ground-truth objects CSV");
        app->add_option("--similar-pairs", similar_pairs, "Engineered similar pairs JSON");
    }

    DataPaths resolve() const
    {
        DataPaths p = dir.empty() ? DataPaths{} : DataPaths::in(dir);
        auto set = [](fs::path& target, const std::string& value) {
            if (!value.empty()) {
                target = value;
            }
        };
        set(p.semantics, semantics);
        set(p.split, split);
        set(p.train_seen, train_seen);
        set(p.train_background, train_background);
        set(p.proposals_test, proposals);
        set(p.test_all, test);
        set(p.similar_pairs, similar_pairs);
        return p;
    }
};

void require_path(const fs::path& p, const std::string& flag)
{
    if (p.empty()) {
        throw ValidationError("missing " + flag + " (or --data-dir)");
    }
}

template<typename T>
std::vector<T> parse_list(const std::string& text, const std::string& what)
{
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(item, &used);
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
            out.push_back(static_cast<T>(v));
        } catch (const std::logic_error&) {
            throw ValidationError("bad " + what + " entry '" + item + "'");
        }
    }
    if (out.empty()) {
        throw ValidationError("empty " + what + " list");
    }
    return out;
}

RunConfig resolve_config(const Globals& g)
{
    RunConfig config;
    if (g.preset == "desk") {
        config = RunConfig::desk_scale();
    } else if (g.preset != "paper") {
        throw ValidationError("unknown preset '" + g.preset + "'");
    }
    if (!g.config.empty()) {
        config = load_config(g.config, config);
    }
    if (!g.overrides.empty()) {
        nlohmann::json doc = nlohmann::json::object();
        for (const auto& kv : g.overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw ValidationError("--set expects key=value, got '" + kv + "'");
            }
            nlohmann::json value;
            try {
                value = nlohmann::json::parse(kv.substr(eq + 1));
            } catch (const nlohmann::json::parse_error&) {
                throw ValidationError("--set value for '" + kv.substr(0, eq) + "' is not a number");
            }
            doc[kv.substr(0, eq)] = value;
        }
        config = parse_config(doc, config);
    }
    if (g.seed) {
        config.seed = *g.seed;
    }
    config.validate();
    return config;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Generative zero-shot detection: benchmark, training, synthesis, heads, evaluation"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Run seed (overrides the config)");
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--preset", g.preset, "Base configuration: paper or desk")->capture_default_str();
    app.add_option("--set", g.overrides, "Config override key=value (repeatable)");
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();

    BenchSpec bench;
    auto* synth = app.add_subcommand("synth-data", "Generate the synthetic benchmark");
    synth->add_option("--n-classes", bench.n_classes)->capture_default_str();
    synth->add_option("--n-unseen", bench.n_unseen)->capture_default_str();
    synth->add_option("--semantic-dim", bench.d)->capture_default_str();
    synth->add_option("--feature-dim", bench.D)->capture_default_str();
    synth->add_option("--images", bench.images)->capture_default_str();
    synth->add_option("--objects-min", bench.objects_min)->capture_default_str();
    synth->add_option("--objects-max", bench.objects_max)->capture_default_str();
    synth->add_option("--jitter", bench.proposal_jitter)->capture_default_str();
    synth->add_option("--background-rate", bench.background_rate)->capture_default_str();
    synth->add_option("--similar-pairs", bench.similar_pair_count)->capture_default_str();
    synth->add_option("--semantic-rank", bench.semantic_rank)->capture_default_str();
    synth->add_option("--semantic-residual", bench.semantic_residual)->capture_default_str();
    synth->add_option("--similar-scale", bench.similar_scale)->capture_default_str();
    synth->add_option("--feature-noise", bench.feature_noise)->capture_default_str();
    synth->add_option("--background-noise", bench.background_noise)->capture_default_str();
    synth->add_option("--proposals-per-object", bench.proposals_per_object)->capture_default_str();

    DataFlags train_data;
    auto* train = app.add_subcommand("train", "Train mapper, seen heads, margins and synthesizer");
    train_data.add(train);

    DataFlags gen_data;
    std::string gen_synth;
    std::string gen_seen_head;
    std::size_t gen_n = 0;
    std::string gen_classes;
    std::string gen_sweep;
    auto* gen = app.add_subcommand("generate", "Synthesize features from a synthesizer checkpoint");
    gen_data.add(gen);
    gen->add_option("--synthesizer", gen_synth, "Synthesizer checkpoint")->required();
    gen->add_option("--n-per-class", gen_n, "Features per class (default: config n_per_class)");
    gen->add_option("--classes", gen_classes, "Comma-separated class ids (default: unseen classes)");
    gen->add_option("--sweep", gen_sweep, "Comma-separated counts; builds a head and evaluates per count");
    gen->add_option("--seen-head", gen_seen_head, "Seen head checkpoint (required with --sweep)");

    DataFlags head_data;
    std::string head_synth;
    std::string head_seen;
    std::string head_features;
    auto* head = app.add_subcommand("build-head", "Train the unseen head and calibrate it");
    head_data.add(head);
    head->add_option("--synthesizer", head_synth, "Synthesizer checkpoint")->required();
    head->add_option("--seen-head", head_seen, "Seen head checkpoint")->required();
    head->add_option("--features", head_features, "Synthesized unseen features CSV")->required();

    DataFlags eval_data;
    std::string eval_head;
    std::string eval_mode = "both";
    auto* eval = app.add_subcommand("evaluate", "Detect on test proposals and score ZSD/GZSD");
    eval_data.add(eval);
    eval->add_option("--head", eval_head, "Head bundle")->required();
    eval->add_option("--mode", eval_mode, "zsd, gzsd or both")->capture_default_str();

    DataFlags ablate_data;
    std::string ablate_masks = "all,all-TRIPLET";
    std::string ablate_seeds = "0,1,2,3,4";
    auto* ablate = app.add_subcommand("ablate", "Full pipeline per loss mask and seed");
    ablate_data.add(ablate);
    ablate->add_option("--masks", ablate_masks, "Comma-separated loss masks")->capture_default_str();
    ablate->add_option("--seeds", ablate_seeds, "Comma-separated seeds")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const fs::path out_dir = g.out_dir;
        RunManifest manifest;
        if (*synth) {
            if (g.seed) {
                bench.seed = *g.seed;
            }
            bench.validate();
            manifest = cmd_synth_data(bench, out_dir);
        } else {
            const RunConfig config = resolve_config(g);
            if (*train) {
                const DataPaths p = train_data.resolve();
                require_path(p.semantics, "--semantics");
                require_path(p.split, "--split");
                require_path(p.train_seen, "--train-seen");
                manifest = cmd_train(config, p, out_dir);
            } else if (*gen) {
                const DataPaths p = gen_data.resolve();
                require_path(p.semantics, "--semantics");
                require_path(p.split, "--split");
                if (!gen_sweep.empty()) {
                    if (gen_seen_head.empty()) {
                        throw ValidationError("--sweep needs --seen-head");
                    }
                    require_path(p.proposals_test, "--proposals");
                    require_path(p.test_all, "--test");
                    manifest = cmd_generate_sweep(config, gen_synth, gen_seen_head, p,
                                                  parse_list<std::size_t>(gen_sweep, "--sweep"), out_dir);
                } else {
                    const std::size_t n = gen_n > 0 ? gen_n : static_cast<std::size_t>(config.n_per_class);
                    const auto classes = gen_classes.empty() ? std::vector<ClassId>{}
                                                             : parse_list<ClassId>(gen_classes, "--classes");
                    manifest = cmd_generate(config, gen_synth, p, n, classes, out_dir);
                }
            } else if (*head) {
                const DataPaths p = head_data.resolve();
                require_path(p.semantics, "--semantics");
                require_path(p.split, "--split");
                manifest = cmd_build_head(config, head_synth, head_seen, head_features, p, out_dir);
            } else if (*eval) {
                const DataPaths p = eval_data.resolve();
                require_path(p.split, "--split");
                require_path(p.proposals_test, "--proposals");
                require_path(p.test_all, "--test");
                std::vector<EvalMode> modes;
                if (eval_mode == "zsd") {
                    modes = {EvalMode::Zsd};
                } else if (eval_mode == "gzsd") {
                    modes = {EvalMode::Gzsd};
                } else if (eval_mode == "both") {
                    modes = {EvalMode::Zsd, EvalMode::Gzsd};
                } else {
                    throw ValidationError("--mode must be zsd, gzsd or both");
                }
                manifest = cmd_evaluate(config, eval_head, p, modes, out_dir);
            } else if (*ablate) {
                const DataPaths p = ablate_data.resolve();
                require_path(p.semantics, "--semantics");
                require_path(p.split, "--split");
                require_path(p.train_seen, "--train-seen");
                require_path(p.proposals_test, "--proposals");
                require_path(p.test_all, "--test");
                std::vector<LossMask> masks;
                std::stringstream ss(ablate_masks);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    masks.push_back(LossMask::parse(item));
                }
                manifest = cmd_ablate(config, p, masks, parse_list<std::uint64_t>(ablate_seeds, "--seeds"),
                                      out_dir);
            }
        }
        for (const auto& [name, path] : manifest.outputs) {
            std::cout << name << ": " << path << '\n';
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
