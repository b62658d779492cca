#include "zsd/mapper.hpp"
#include "zsd/error.hpp"

#include <algorithm>
#include <numeric>

namespace zsd {

MapperParams init_mapper(int feature_dim, int semantic_dim, int hidden, std::uint64_t seed)
{
    std::mt19937_64 rng(derive_seed(seed, 10));
    const int width = hidden > 0 ? hidden : 2 * semantic_dim;
    return MapperParams{Mlp::init(feature_dim, width, semantic_dim, Activation::Relu, rng)};
}

Vec map_to_semantics(const MapperParams& m, const Vec& feature)
{
    if (feature.size() != m.feature_dim()) {
        throw ValidationError("mapper expects features of length " + std::to_string(m.feature_dim()));
    }
    return m.net.forward(feature);
}

Mat map_to_semantics(const MapperParams& m, const Mat& features)
{
    if (features.rows() != m.feature_dim()) {
        throw ValidationError("mapper expects features of length " + std::to_string(m.feature_dim()));
    }
    return m.net.forward(features);
}

double reconstruction_loss(const MapperParams& m, const Mat& features, const Mat& targets, MlpGrad* grad)
{
    Mlp::Cache cache;
    const Mat out = m.net.forward(features, cache);
    const Mat diff = out - targets;
    const double n = static_cast<double>(features.cols());
    if (grad != nullptr) {
        *grad = m.net.backward(cache, 2.0 * diff / n);
    }
    return diff.squaredNorm() / n;
}

MapperParams train_mapper(const FeatureSet& train, const SemanticTable& table, const SplitSpec& split,
                          const MapperTraining& options, std::uint64_t seed)
{
    if (train.empty()) {
        throw ValidationError("train_mapper: empty training set");
    }
    for (const auto& r : train.records) {
        if (!split.is_seen(r.label)) {
            throw ValidationError("train_mapper: label " + std::to_string(r.label) + " is not a seen class");
        }
    }
    MapperParams params = init_mapper(train.dim, table.dim(), options.hidden, seed);
    if (options.epochs == 0) {
        return params;
    }
    const Mat features = train.matrix();
    const Mat targets = table.stack(train.labels());
    const auto n = static_cast<std::size_t>(features.cols());
    const auto batch = static_cast<std::size_t>(std::max(1, options.batch));

    std::mt19937_64 rng(derive_seed(seed, 11));
    Adam adam(params.net, options.lr, 0.9, 0.999);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            const std::vector<Eigen::Index> idx(order.begin() + static_cast<long>(start),
                                                order.begin() + static_cast<long>(start + len));
            MlpGrad grad;
            reconstruction_loss(params, features(Eigen::all, idx), targets(Eigen::all, idx), &grad);
            adam.step(params.net, grad);
        }
    }
    if (!params.net.finite()) {
        throw NumericError("train_mapper: parameters diverged");
    }
    return params;
}

} // namespace zsd
