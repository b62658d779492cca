#ifndef ZSD_CONFIG_HPP
#define ZSD_CONFIG_HPP

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace zsd {

// Which generator loss terms participate in training. The adversarial term
// is mandatory.
struct LossMask {
    bool wgan = true;
    bool cls = true;
    bool ms = true;
    bool cycon = true;
    bool triplet = true;

    // Parses "WGAN+CLS+MS", "all" or "all-TRIPLET" style names.
    static LossMask parse(const std::string& text);
    [[nodiscard]] std::string name() const;

    friend bool operator==(const LossMask&, const LossMask&) = default;
};

// Run configuration. Defaults are the published training hyperparameters;
// the desk-scale preset adjusts widths, batch size, head training and two
// loss weights for the synthetic benchmark.
struct RunConfig {
    // Generator objective weights.
    double alpha_wgan = 1.0;
    double alpha_cls = 0.01;
    double alpha_ms = 0.01;
    double alpha_cycon = 0.01;
    double alpha_triplet = 0.1;
    LossMask losses;

    double lambda_gp = 10.0;
    double lr = 0.0005;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int batch = 128;
    int epochs = 55;
    int hidden = 4096;
    int z_dim = 0; // 0 means "same as the semantic dimension"
    int critic_steps = 5;
    bool triplets_include_unseen = true;
    bool select_best_epoch = true;
    double val_fraction = 0.1;

    // Flexible margin.
    double shrinkage = 0.5;
    double margin_min = 0.1;
    double margin_max = 1.0;

    // Visual-semantic mapper.
    int mapper_hidden = 0; // 0 means 2 * semantic dimension
    int mapper_epochs = 50;
    double mapper_lr = 0.001;

    // Linear softmax heads.
    int cls_epochs = 30;
    double cls_lr = 0.001;
    int n_per_class = 250;
    bool unseen_head_mix_seen = false;
    bool calibrate = true;

    // Detection evaluation.
    double nms_threshold = 0.5;
    double score_threshold = 0.01;
    double iou_threshold = 0.5;
    int recall_k = 100;

    std::uint64_t seed = 0;

    void validate() const;

    [[nodiscard]] int resolved_z_dim(int semantic_dim) const { return z_dim > 0 ? z_dim : semantic_dim; }
    [[nodiscard]] int resolved_mapper_hidden(int semantic_dim) const
    {
        return mapper_hidden > 0 ? mapper_hidden : 2 * semantic_dim;
    }

    // hidden 256, batch 32, heads trained longer, alpha_cycon 0.2,
    // alpha_triplet 0.3, unseen head trained with synthesized seen features.
    static RunConfig desk_scale();
};

// Flat key -> number map. Unknown keys and non-numeric values are rejected.
RunConfig parse_config(const nlohmann::json& doc, const RunConfig& base = RunConfig{});
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = RunConfig{});
nlohmann::json config_to_json(const RunConfig& config);
void save_config(const RunConfig& config, const std::filesystem::path& path);

// Names accepted by parse_config, in serialization order.
std::vector<std::string> config_keys();

} // namespace zsd

#endif // ZSD_CONFIG_HPP
