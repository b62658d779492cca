#ifndef ZSD_CHECKPOINT_HPP
#define ZSD_CHECKPOINT_HPP

#include "zsd/head.hpp"
#include "zsd/mapper.hpp"
#include "zsd/synthesizer.hpp"

#include <filesystem>

namespace zsd {

// Seen head (seen classes plus background), unseen head trained on
// synthesized features, and the unseen logit offset used for GZSD.
struct HeadBundle {
    ClassifierHead seen_head;
    ClassifierHead unseen_head;
    double unseen_offset = 0.0;

    friend bool operator==(const HeadBundle&, const HeadBundle&) = default;
};

void write_json(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

void save_mapper(const MapperParams& mapper, const std::filesystem::path& path);
MapperParams load_mapper(const std::filesystem::path& path);

void save_synthesizer(const SynthesizerParams& params, const std::filesystem::path& path);
SynthesizerParams load_synthesizer(const std::filesystem::path& path);

void save_head(const ClassifierHead& head, const std::filesystem::path& path);
ClassifierHead load_head(const std::filesystem::path& path);

void save_head_bundle(const HeadBundle& bundle, const SplitSpec& split, const std::filesystem::path& path);
HeadBundle load_head_bundle(const std::filesystem::path& path);

} // namespace zsd

#endif // ZSD_CHECKPOINT_HPP
