#include "zsd/error.hpp"
#include "zsd/synthesizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace zsd {

namespace {

// Draws batch indices without replacement from a persistent pool.
class BatchSampler {
public:
    BatchSampler(std::vector<std::size_t> pool, std::mt19937_64& rng) : pool_(std::move(pool)), rng_(rng) {}

    std::vector<Eigen::Index> draw(std::size_t size)
    {
        size = std::min(size, pool_.size());
        std::vector<Eigen::Index> out(size);
        for (std::size_t i = 0; i < size; ++i) {
            const auto j = std::uniform_int_distribution<std::size_t>(i, pool_.size() - 1)(rng_);
            std::swap(pool_[i], pool_[j]);
            out[i] = static_cast<Eigen::Index>(pool_[i]);
        }
        return out;
    }

    [[nodiscard]] std::size_t size() const noexcept { return pool_.size(); }

private:
    std::vector<std::size_t> pool_;
    std::mt19937_64& rng_;
};

Vec uniform_vector(Eigen::Index n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out[i] = u(rng);
    }
    return out;
}

// Held-out score for best-epoch selection: train a linear probe on
// synthesized seen features and return its negative mean cross-entropy on
// real held-out seen features.
double validation_score(const SynthesizerParams& params, const SemanticTable& table, const SplitSpec& split,
                        const FeatureSet& heldout, const RunConfig& config, std::uint64_t seed)
{
    const FeatureSet synthetic = synthesize(params, table, split.seen, 50, derive_seed(seed, 1));
    const ClassifierHead probe =
        train_classifier(synthetic, split.seen, ClassifierTraining{20, config.cls_lr, config.batch}, derive_seed(seed, 2));
    std::vector<std::size_t> targets;
    targets.reserve(heldout.size());
    for (const auto& r : heldout.records) {
        targets.push_back(probe.index_of(r.label));
    }
    return -cross_entropy(probe, heldout.matrix(), targets);
}

} // namespace

SynthesisResult train_synthesizer(const FeatureSet& train_seen, const SemanticTable& table, const SplitSpec& split,
                                  const MarginMatrix& margins, const MapperParams& mapper,
                                  const ClassifierHead& seen_classifier, const RunConfig& config, std::uint64_t seed)
{
    config.validate();
    split.validate();
    table.check_covers(split);
    if (train_seen.empty()) {
        throw ValidationError("train_synthesizer: empty training set");
    }
    for (const auto& r : train_seen.records) {
        if (split.is_unseen(r.label)) {
            throw ValidationError("train_synthesizer: unseen-class feature (class " + std::to_string(r.label) +
                                  ") in seen training data");
        }
        if (!split.is_seen(r.label)) {
            throw ValidationError("train_synthesizer: label " + std::to_string(r.label) + " is not a seen class");
        }
    }
    for (const auto& list : {split.seen, split.unseen}) {
        for (const auto id : list) {
            if (!margins.contains(id)) {
                throw ValidationError("train_synthesizer: margin matrix lacks class " + std::to_string(id));
            }
        }
    }
    if (config.losses.cls) {
        for (const auto id : split.seen) {
            if (!seen_classifier.contains(id)) {
                throw ValidationError("train_synthesizer: seen classifier lacks class " + std::to_string(id));
            }
        }
    }
    if (mapper.feature_dim() != train_seen.dim || mapper.semantic_dim() != table.dim()) {
        throw ValidationError("train_synthesizer: mapper dimensions do not match the data");
    }

    const int z_dim = config.resolved_z_dim(table.dim());
    SynthesisResult result;
    result.params = init_synthesizer(z_dim, table.dim(), train_seen.dim, config, seed);
    if (config.epochs == 0) {
        return result;
    }
    SynthesizerParams& params = result.params;
    std::mt19937_64 rng(derive_seed(seed, 40));

    // Hold out a validation slice of real seen features for best-epoch selection.
    const std::size_t n_all = train_seen.size();
    std::vector<std::size_t> order(n_all);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t n_val = 0;
    if (config.select_best_epoch && config.val_fraction > 0.0) {
        std::shuffle(order.begin(), order.end(), rng);
        n_val = std::min(n_all - 1, static_cast<std::size_t>(std::floor(config.val_fraction * n_all)));
    }
    FeatureSet heldout{train_seen.dim, {}};
    for (std::size_t i = 0; i < n_val; ++i) {
        heldout.records.push_back(train_seen.records[order[i]]);
    }
    std::vector<std::size_t> train_pool(order.begin() + static_cast<long>(n_val), order.end());
    std::sort(train_pool.begin(), train_pool.end());

    const Mat features = train_seen.matrix();
    const std::vector<ClassId> labels = train_seen.labels();
    const Mat semantics = table.stack(labels);

    const auto& mask = config.losses;
    const bool need_unseen = mask.cycon || (mask.triplet && config.triplets_include_unseen);
    const auto n_unseen_batch = static_cast<std::size_t>(std::ceil(
        static_cast<double>(config.batch) * static_cast<double>(split.unseen.size()) / static_cast<double>(split.seen.size())));

    Adam critic_opt(params.critic, config.lr, config.adam_beta1, config.adam_beta2);
    Adam generator_opt(params.generator, config.lr, config.adam_beta1, config.adam_beta2);
    BatchSampler sampler(train_pool, rng);
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch), sampler.size());
    const std::size_t iterations = (sampler.size() + batch - 1) / batch;

    SynthesizerParams best = params;
    double best_score = -std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        for (std::size_t it = 0; it < iterations; ++it) {
            for (int step = 0; step < config.critic_steps; ++step) {
                const auto idx = sampler.draw(batch);
                const Mat real = features(Eigen::all, idx);
                const Mat p = semantics(Eigen::all, idx);
                const Mat fake = generate(params, standard_normal(z_dim, p.cols(), rng), p);
                const Vec rhos = uniform_vector(p.cols(), rng);
                const CriticLoss critic_loss = wgan_critic_terms(params.critic, real, fake, p, config.lambda_gp, rhos);
                critic_opt.step(params.critic, critic_loss.grad);
                log.wgan_critic += critic_loss.value;
                log.wasserstein_gap += critic_loss.gap;
            }

            const auto idx = sampler.draw(batch);
            const Mat p = semantics(Eigen::all, idx);
            std::vector<ClassId> batch_labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                batch_labels[i] = labels[static_cast<std::size_t>(idx[i])];
            }
            const Mat z1 = standard_normal(z_dim, p.cols(), rng);
            Mlp::Cache cache1;
            const Mat fake1 = params.generator.forward(concat_rows(z1, p), cache1);
            Mat d_fake1 = Mat::Zero(fake1.rows(), fake1.cols());

            const FeatureLoss adversarial = wgan_generator_terms(params.critic, fake1, p);
            d_fake1 += config.alpha_wgan * adversarial.grad;
            log.wgan_generator += adversarial.value;

            if (mask.cls) {
                const FeatureLoss cls = cls_terms(seen_classifier, fake1, batch_labels);
                d_fake1 += config.alpha_cls * cls.grad;
                log.cls += cls.value;
            }

            MlpGrad grad = params.generator.zero_grad();
            if (mask.ms) {
                const Mat z2 = standard_normal(z_dim, p.cols(), rng);
                Mlp::Cache cache2;
                const Mat fake2 = params.generator.forward(concat_rows(z2, p), cache2);
                const DiversityLoss ms = ms_terms(fake1, fake2, z1, z2);
                // The ratio is maximized, so it enters the objective negated.
                d_fake1 -= config.alpha_ms * ms.grad_first;
                grad += params.generator.backward(cache2, -config.alpha_ms * ms.grad_second);
                log.ms += ms.value;
            }

            if (need_unseen) {
                std::vector<ClassId> unseen_labels(n_unseen_batch);
                for (auto& l : unseen_labels) {
                    l = split.unseen[std::uniform_int_distribution<std::size_t>(0, split.unseen.size() - 1)(rng)];
                }
                const Mat pu = table.stack(unseen_labels);
                const Mat zu = standard_normal(z_dim, pu.cols(), rng);
                Mlp::Cache cache_u;
                const Mat fake_u = params.generator.forward(concat_rows(zu, pu), cache_u);
                Mat d_fake_u = Mat::Zero(fake_u.rows(), fake_u.cols());

                if (mask.cycon) {
                    const FeatureLoss seen_term = cycon_terms(mapper, fake1, p);
                    const FeatureLoss unseen_term = cycon_terms(mapper, fake_u, pu);
                    d_fake1 += config.alpha_cycon * seen_term.grad;
                    d_fake_u += config.alpha_cycon * unseen_term.grad;
                    log.cycon += seen_term.value + unseen_term.value;
                }
                if (mask.triplet && config.triplets_include_unseen) {
                    std::vector<ClassId> pool_labels = batch_labels;
                    pool_labels.insert(pool_labels.end(), unseen_labels.begin(), unseen_labels.end());
                    Mat pool(fake1.rows(), fake1.cols() + fake_u.cols());
                    pool << fake1, fake_u;
                    const FeatureLoss triplet = triplet_terms(pool, mine_triplets(pool_labels), margins);
                    d_fake1 += config.alpha_triplet * triplet.grad.leftCols(fake1.cols());
                    d_fake_u += config.alpha_triplet * triplet.grad.rightCols(fake_u.cols());
                    log.triplet += triplet.value;
                }
                grad += params.generator.backward(cache_u, d_fake_u);
            }
            if (mask.triplet && !config.triplets_include_unseen) {
                const FeatureLoss triplet = triplet_terms(fake1, mine_triplets(batch_labels), margins);
                d_fake1 += config.alpha_triplet * triplet.grad;
                log.triplet += triplet.value;
            }

            grad += params.generator.backward(cache1, d_fake1);
            generator_opt.step(params.generator, grad);
        }

        if (!params.generator.finite() || !params.critic.finite()) {
            throw NumericError("train_synthesizer: parameters diverged at epoch " + std::to_string(epoch));
        }
        const double critic_updates = static_cast<double>(iterations) * config.critic_steps;
        const double gen_updates = static_cast<double>(iterations);
        log.wgan_critic /= critic_updates;
        log.wasserstein_gap /= critic_updates;
        log.wgan_generator /= gen_updates;
        log.cls /= gen_updates;
        log.ms /= gen_updates;
        log.cycon /= gen_updates;
        log.triplet /= gen_updates;
        params.epoch = epoch;

        if (n_val > 0) {
            log.validation = validation_score(params, table, split, heldout, config, derive_seed(seed, 41));
            if (epoch == 1 || log.validation > best_score) {
                best_score = log.validation;
                best = params;
            }
        }
        result.log.push_back(log);
    }
    if (n_val > 0) {
        params = best;
    }
    return result;
}

FeatureSet synthesize(const SynthesizerParams& params, const SemanticTable& table,
                      const std::vector<ClassId>& class_ids, std::size_t n_per_class, std::uint64_t seed)
{
    FeatureSet out;
    out.dim = params.feature_dim;
    for (const auto id : class_ids) {
        if (!table.contains(id)) {
            throw ValidationError("synthesize: unknown class " + std::to_string(id));
        }
    }
    if (n_per_class == 0) {
        return out;
    }
    std::mt19937_64 rng(derive_seed(seed, 50));
    out.records.reserve(class_ids.size() * n_per_class);
    for (const auto id : class_ids) {
        const auto n = static_cast<Eigen::Index>(n_per_class);
        const Mat p = table.vector(id).replicate(1, n);
        const Mat f = generate(params, standard_normal(params.z_dim, n, rng), p);
        for (Eigen::Index c = 0; c < n; ++c) {
            out.records.push_back({"synthetic", kSyntheticBox, id, f.col(c)});
        }
    }
    return out;
}

void save_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << "epoch,L_wgan_c,L_wgan_g,L_cls,L_ms,L_cycon,L_triplet\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << format_real(e.wgan_critic) << ',' << format_real(e.wgan_generator) << ','
            << format_real(e.cls) << ',' << format_real(e.ms) << ',' << format_real(e.cycon) << ','
            << format_real(e.triplet) << '\n';
    }
}

} // namespace zsd
