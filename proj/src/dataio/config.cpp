#include "zsd/config.hpp"
#include "zsd/error.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace zsd {

namespace {

enum class Kind { Real, Int, Flag, Seed };

struct Field {
    const char* key;
    Kind kind;
    std::function<void(RunConfig&, double)> set;
    std::function<double(const RunConfig&)> get;
};

#define ZSD_REAL(name) \
    Field { #name, Kind::Real, [](RunConfig& c, double v) { c.name = v; }, [](const RunConfig& c) { return c.name; } }
#define ZSD_INT(name)                                                          \
    Field                                                                      \
    {                                                                          \
        #name, Kind::Int, [](RunConfig& c, double v) { c.name = static_cast<int>(v); }, \
            [](const RunConfig& c) { return static_cast<double>(c.name); }     \
    }
#define ZSD_FLAG(key, expr)                                                              \
    Field                                                                                \
    {                                                                                    \
        key, Kind::Flag, [](RunConfig& c, double v) { c.expr = v != 0.0; },             \
            [](const RunConfig& c) { return c.expr ? 1.0 : 0.0; }                       \
    }

const std::vector<Field>& fields()
{
    static const std::vector<Field> table = {
        ZSD_REAL(alpha_wgan),
        ZSD_REAL(alpha_cls),
        ZSD_REAL(alpha_ms),
        ZSD_REAL(alpha_cycon),
        ZSD_REAL(alpha_triplet),
        ZSD_FLAG("use_wgan", losses.wgan),
        ZSD_FLAG("use_cls", losses.cls),
        ZSD_FLAG("use_ms", losses.ms),
        ZSD_FLAG("use_cycon", losses.cycon),
        ZSD_FLAG("use_triplet", losses.triplet),
        ZSD_REAL(lambda_gp),
        ZSD_REAL(lr),
        ZSD_REAL(adam_beta1),
        ZSD_REAL(adam_beta2),
        ZSD_INT(batch),
        ZSD_INT(epochs),
        ZSD_INT(hidden),
        ZSD_INT(z_dim),
        ZSD_INT(critic_steps),
        ZSD_FLAG("triplets_include_unseen", triplets_include_unseen),
        ZSD_FLAG("select_best_epoch", select_best_epoch),
        ZSD_REAL(val_fraction),
        ZSD_REAL(shrinkage),
        ZSD_REAL(margin_min),
        ZSD_REAL(margin_max),
        ZSD_INT(mapper_hidden),
        ZSD_INT(mapper_epochs),
        ZSD_REAL(mapper_lr),
        ZSD_INT(cls_epochs),
        ZSD_REAL(cls_lr),
        ZSD_INT(n_per_class),
        ZSD_FLAG("unseen_head_mix_seen", unseen_head_mix_seen),
        ZSD_FLAG("calibrate", calibrate),
        ZSD_REAL(nms_threshold),
        ZSD_REAL(score_threshold),
        ZSD_REAL(iou_threshold),
        ZSD_INT(recall_k),
        Field{"seed", Kind::Seed, [](RunConfig& c, double v) { c.seed = static_cast<std::uint64_t>(v); },
              [](const RunConfig& c) { return static_cast<double>(c.seed); }},
    };
    return table;
}

#undef ZSD_REAL
#undef ZSD_INT
#undef ZSD_FLAG

void require(bool ok, const std::string& what)
{
    if (!ok) {
        throw ValidationError("config: " + what);
    }
}

} // namespace

// ---------------------------------------------------------------------------
// LossMask

LossMask LossMask::parse(const std::string& text)
{
    if (text == "all") {
        return LossMask{};
    }
    auto set_term = [](LossMask& m, const std::string& term, bool on) {
        if (term == "WGAN") {
            m.wgan = on;
        } else if (term == "CLS") {
            m.cls = on;
        } else if (term == "MS") {
            m.ms = on;
        } else if (term == "CYCON") {
            m.cycon = on;
        } else if (term == "TRIPLET") {
            m.triplet = on;
        } else {
            throw ValidationError("unknown loss term '" + term + "'");
        }
    };
    LossMask mask;
    if (text.rfind("all-", 0) == 0) {
        std::stringstream ss(text.substr(4));
        std::string term;
        while (std::getline(ss, term, '-')) {
            set_term(mask, term, false);
        }
    } else {
        mask = LossMask{false, false, false, false, false};
        std::stringstream ss(text);
        std::string term;
        while (std::getline(ss, term, '+')) {
            set_term(mask, term, true);
        }
    }
    if (!mask.wgan) {
        throw ValidationError("loss mask '" + text + "' disables WGAN, which is always required");
    }
    return mask;
}

std::string LossMask::name() const
{
    std::string out;
    auto add = [&out](bool on, const char* term) {
        if (on) {
            out += out.empty() ? "" : "+";
            out += term;
        }
    };
    add(wgan, "WGAN");
    add(ms, "MS");
    add(cls, "CLS");
    add(cycon, "CYCON");
    add(triplet, "TRIPLET");
    return out;
}

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const
{
    require(losses.wgan, "use_wgan cannot be disabled");
    for (const double a : {alpha_wgan, alpha_cls, alpha_ms, alpha_cycon, alpha_triplet}) {
        require(std::isfinite(a) && a >= 0.0, "loss weights must be finite and non-negative");
    }
    require(lambda_gp >= 0.0, "lambda_gp must be non-negative");
    require(lr > 0.0 && mapper_lr > 0.0 && cls_lr > 0.0, "learning rates must be positive");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "adam betas must lie in [0, 1)");
    require(batch > 0, "batch must be positive");
    require(epochs >= 0 && mapper_epochs >= 0 && cls_epochs >= 0, "epochs must be non-negative");
    require(hidden > 0, "hidden must be positive");
    require(z_dim >= 0 && mapper_hidden >= 0, "z_dim and mapper_hidden must be non-negative");
    require(critic_steps > 0, "critic_steps must be positive");
    require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must lie in [0, 1)");
    require(shrinkage >= 0.0 && shrinkage <= 1.0, "shrinkage must lie in [0, 1]");
    require(margin_min > 0.0 && margin_min < margin_max, "need 0 < margin_min < margin_max");
    require(n_per_class >= 0, "n_per_class must be non-negative");
    require(nms_threshold >= 0.0 && nms_threshold <= 1.0, "nms_threshold must lie in [0, 1]");
    require(score_threshold >= 0.0 && score_threshold <= 1.0, "score_threshold must lie in [0, 1]");
    require(iou_threshold > 0.0 && iou_threshold <= 1.0, "iou_threshold must lie in (0, 1]");
    require(recall_k >= 0, "recall_k must be non-negative");
}

RunConfig RunConfig::desk_scale()
{
    RunConfig c;
    c.hidden = 256;
    c.batch = 32;
    c.cls_epochs = 60;
    c.cls_lr = 0.005;
    c.unseen_head_mix_seen = true;
    c.alpha_cycon = 0.2;
    c.alpha_triplet = 0.3;
    return c;
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> keys;
    for (const auto& f : fields()) {
        keys.emplace_back(f.key);
    }
    return keys;
}

RunConfig parse_config(const nlohmann::json& doc, const RunConfig& base)
{
    if (!doc.is_object()) {
        throw ValidationError("config: expected a JSON object");
    }
    RunConfig config = base;
    for (const auto& [key, value] : doc.items()) {
        const Field* field = nullptr;
        for (const auto& f : fields()) {
            if (key == f.key) {
                field = &f;
                break;
            }
        }
        require(field != nullptr, "unknown key '" + key + "'");
        require(value.is_number(), "'" + key + "' must be numeric");
        const double v = value.get<double>();
        require(std::isfinite(v), "'" + key + "' must be finite");
        if (field->kind != Kind::Real) {
            require(std::floor(v) == v, "'" + key + "' must be an integer");
        }
        if (field->kind == Kind::Seed) {
            require(v >= 0.0, "'seed' must be non-negative");
            config.seed = value.is_number_unsigned() ? value.get<std::uint64_t>() : static_cast<std::uint64_t>(v);
            continue;
        }
        field->set(config, v);
    }
    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base)
{
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("config: cannot open " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config: " + path.string() + ": " + e.what());
    }
    return parse_config(doc, base);
}

nlohmann::json config_to_json(const RunConfig& config)
{
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& f : fields()) {
        const double v = f.get(config);
        if (f.kind == Kind::Real) {
            doc[f.key] = v;
        } else if (f.kind == Kind::Seed) {
            doc[f.key] = config.seed;
        } else {
            doc[f.key] = static_cast<long long>(v);
        }
    }
    return doc;
}

void save_config(const RunConfig& config, const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << config_to_json(config).dump(2) << '\n';
}

} // namespace zsd
