#include "zsd/checkpoint.hpp"
#include "zsd/error.hpp"

#include <fstream>

namespace zsd {

void write_json(const nlohmann::json& doc, const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << doc.dump() << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IngestError(path.string(), 0, "cannot open file");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw IngestError(path.string(), 0, e.what());
    }
}

namespace {

template<typename F>
auto parse_checkpoint(const std::filesystem::path& path, const char* kind, F&& body)
{
    const auto doc = read_json(path);
    try {
        if (doc.at("kind").get<std::string>() != kind) {
            throw IngestError(path.string(), 0, std::string("not a ") + kind + " checkpoint");
        }
        return body(doc);
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(path.string(), 0, e.what());
    }
}

} // namespace

void save_mapper(const MapperParams& mapper, const std::filesystem::path& path)
{
    write_json({{"kind", "mapper"}, {"net", mlp_to_json(mapper.net)}}, path);
}

MapperParams load_mapper(const std::filesystem::path& path)
{
    return parse_checkpoint(path, "mapper", [](const nlohmann::json& doc) {
        return MapperParams{mlp_from_json(doc.at("net"))};
    });
}

void save_synthesizer(const SynthesizerParams& params, const std::filesystem::path& path)
{
    write_json({{"kind", "synthesizer"},
                {"z_dim", params.z_dim},
                {"semantic_dim", params.semantic_dim},
                {"feature_dim", params.feature_dim},
                {"epoch", params.epoch},
                {"config", config_to_json(params.config)},
                {"generator", mlp_to_json(params.generator)},
                {"critic", mlp_to_json(params.critic)}},
               path);
}

SynthesizerParams load_synthesizer(const std::filesystem::path& path)
{
    return parse_checkpoint(path, "synthesizer", [](const nlohmann::json& doc) {
        SynthesizerParams params;
        params.z_dim = doc.at("z_dim").get<int>();
        params.semantic_dim = doc.at("semantic_dim").get<int>();
        params.feature_dim = doc.at("feature_dim").get<int>();
        params.epoch = doc.at("epoch").get<int>();
        params.config = parse_config(doc.at("config"));
        params.generator = mlp_from_json(doc.at("generator"));
        params.critic = mlp_from_json(doc.at("critic"));
        if (params.generator.in_dim() != params.z_dim + params.semantic_dim ||
            params.generator.out_dim() != params.feature_dim ||
            params.critic.in_dim() != params.feature_dim + params.semantic_dim || params.critic.out_dim() != 1) {
            throw ValidationError("synthesizer checkpoint: network shapes disagree with the recorded dimensions");
        }
        return params;
    });
}

void save_head(const ClassifierHead& head, const std::filesystem::path& path)
{
    write_json({{"kind", "head"}, {"head", head_to_json(head)}}, path);
}

ClassifierHead load_head(const std::filesystem::path& path)
{
    return parse_checkpoint(path, "head", [](const nlohmann::json& doc) { return head_from_json(doc.at("head")); });
}

void save_head_bundle(const HeadBundle& bundle, const SplitSpec& split, const std::filesystem::path& path)
{
    const ClassifierHead assembled = assemble_head(bundle.seen_head, bundle.unseen_head, split, 0.0);
    write_json({{"kind", "head_bundle"},
                {"seen_head", head_to_json(bundle.seen_head)},
                {"unseen_head", head_to_json(bundle.unseen_head)},
                {"unseen_offset", bundle.unseen_offset},
                {"class_order", assembled.class_ids()}},
               path);
}

HeadBundle load_head_bundle(const std::filesystem::path& path)
{
    return parse_checkpoint(path, "head_bundle", [](const nlohmann::json& doc) {
        return HeadBundle{head_from_json(doc.at("seen_head")), head_from_json(doc.at("unseen_head")),
                          doc.at("unseen_offset").get<double>()};
    });
}

} // namespace zsd
