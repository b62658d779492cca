#ifndef ZSD_MAPPER_HPP
#define ZSD_MAPPER_HPP

#include "zsd/dataio.hpp"
#include "zsd/nn.hpp"

#include <cstdint>

namespace zsd {

// Visual -> semantic regressor, D -> 2d (ReLU) -> d. Frozen after training.
struct MapperParams {
    Mlp net;

    [[nodiscard]] int feature_dim() const { return net.in_dim(); }
    [[nodiscard]] int semantic_dim() const { return net.out_dim(); }

    friend bool operator==(const MapperParams&, const MapperParams&) = default;
};

struct MapperTraining {
    int hidden = 0;
    int epochs = 50;
    double lr = 0.001;
    int batch = 128;
};

MapperParams init_mapper(int feature_dim, int semantic_dim, int hidden, std::uint64_t seed);

Vec map_to_semantics(const MapperParams& m, const Vec& feature);
Mat map_to_semantics(const MapperParams& m, const Mat& features);

// Mean over columns of ||target - M(feature)||^2, with its parameter gradient.
double reconstruction_loss(const MapperParams& m, const Mat& features, const Mat& targets, MlpGrad* grad = nullptr);

// Seeded initialization followed by Adam on the reconstruction loss.
// Every label must be a seen class with semantics.
MapperParams train_mapper(const FeatureSet& train, const SemanticTable& table, const SplitSpec& split,
                          const MapperTraining& options, std::uint64_t seed);

} // namespace zsd

#endif // ZSD_MAPPER_HPP
