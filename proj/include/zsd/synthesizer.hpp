#ifndef ZSD_SYNTHESIZER_HPP
#define ZSD_SYNTHESIZER_HPP

#include "zsd/config.hpp"
#include "zsd/dataio.hpp"
#include "zsd/head.hpp"
#include "zsd/mapper.hpp"
#include "zsd/nn.hpp"
#include "zsd/semantics.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

namespace zsd {

// Conditional WGAN: generator G([z; p]) -> feature, critic Q([f; p]) -> score.
struct SynthesizerParams {
    Mlp generator;
    Mlp critic;
    int z_dim = 0;
    int semantic_dim = 0;
    int feature_dim = 0;
    RunConfig config;
    int epoch = 0; // epoch the weights come from; 0 is the initialization

    friend bool operator==(const SynthesizerParams& a, const SynthesizerParams& b)
    {
        return a.generator == b.generator && a.critic == b.critic && a.z_dim == b.z_dim &&
               a.semantic_dim == b.semantic_dim && a.feature_dim == b.feature_dim && a.epoch == b.epoch;
    }
};

SynthesizerParams init_synthesizer(int z_dim, int semantic_dim, int feature_dim, const RunConfig& config,
                                   std::uint64_t seed);

// Stacks columns [top; bottom].
Mat concat_rows(const Mat& top, const Mat& bottom);

Vec generate(const SynthesizerParams& params, const Vec& z, const Vec& p);
Mat generate(const SynthesizerParams& params, const Mat& z, const Mat& p);
double critic_score(const SynthesizerParams& params, const Vec& f, const Vec& p);
Vec critic_score(const SynthesizerParams& params, const Mat& f, const Mat& p);

// z_dim x n standard normal matrix, one sample per column.
Mat sample_noise(std::size_t n, int z_dim, std::uint64_t seed);

// d Q(f, p) / d f, one column per sample.
Mat critic_input_gradient(const Mlp& critic, const Mat& f, const Mat& p);

// (||grad_f Q(f_hat, p)||_2 - 1)^2 at f_hat = rho f_real + (1 - rho) f_fake.
double gradient_penalty(const SynthesizerParams& params, const Vec& f_real, const Vec& f_fake, const Vec& p,
                        double rho);

// ---------------------------------------------------------------------------
// Loss terms. Each *_terms function returns the value together with the
// gradient with respect to its feature inputs; the trainer backpropagates
// those through the generator.

struct FeatureLoss {
    double value = 0.0;
    Mat grad; // same shape as the feature batch
};

struct CriticLoss {
    double value = 0.0;   // E[Q(fake)] - E[Q(real)] + lambda E[penalty]
    double gap = 0.0;     // E[Q(real)] - E[Q(fake)]
    double penalty = 0.0; // E[penalty]
    MlpGrad grad;         // with respect to the critic parameters
};

// Critic objective with one interpolation weight per column.
CriticLoss wgan_critic_terms(const Mlp& critic, const Mat& real, const Mat& fake, const Mat& semantics, double lambda,
                             const Vec& rhos);
double loss_wgan_critic(const SynthesizerParams& params, const Mat& real, const Mat& fake, const Mat& semantics,
                        double lambda, std::uint64_t seed);

// -E[Q(fake)].
FeatureLoss wgan_generator_terms(const Mlp& critic, const Mat& fake, const Mat& semantics);
double loss_wgan_generator(const SynthesizerParams& params, const Mat& fake, const Mat& semantics);

// Mean negative log-probability of the true class under a softmax head.
FeatureLoss cls_terms(const ClassifierHead& classifier, const Mat& fake, const std::vector<ClassId>& labels);
double loss_cls(const ClassifierHead& classifier, const Mat& fake, const std::vector<ClassId>& labels);

// Mean over columns of ||f1 - f2||_1 / ||z1 - z2||_1.
struct DiversityLoss {
    double value = 0.0;
    Mat grad_first;
    Mat grad_second;
};
inline constexpr double kNoisePairEpsilon = 1e-12;
DiversityLoss ms_terms(const Mat& fake1, const Mat& fake2, const Mat& z1, const Mat& z2);
double loss_ms(const SynthesizerParams& params, const Vec& z1, const Vec& z2, const Vec& p);

struct Triplet {
    std::size_t anchor;
    std::size_t positive;
    std::size_t negative;
    ClassId anchor_class;
    ClassId negative_class;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Every (a, p, n) with label(a) == label(p), a != p, label(n) != label(a),
// ordered lexicographically.
std::vector<Triplet> mine_triplets(const std::vector<ClassId>& labels);

// Mean over triplets of max(0, d(a, p) - d(a, n) + margin(class a, class n)).
FeatureLoss triplet_terms(const Mat& features, const std::vector<Triplet>& triplets, const MarginMatrix& margins);
double loss_triplet(const Mat& features, const std::vector<Triplet>& triplets, const MarginMatrix& margins);

// Mean over columns of ||p - M(f)||^2.
FeatureLoss cycon_terms(const MapperParams& mapper, const Mat& fake, const Mat& semantics);
double loss_cycon(const MapperParams& mapper, const SynthesizerParams& params, const Mat& z, const Mat& semantics);

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
    int epoch = 0;
    double wgan_critic = 0.0;
    double wgan_generator = 0.0;
    double cls = 0.0;
    double ms = 0.0;
    double cycon = 0.0;
    double triplet = 0.0;
    double wasserstein_gap = 0.0; // E[Q(real)] - E[Q(fake)] averaged over critic steps
    double validation = 0.0;      // best-epoch selection score, when enabled
};

struct SynthesisResult {
    SynthesizerParams params;
    std::vector<EpochLog> log;
};

SynthesisResult train_synthesizer(const FeatureSet& train_seen, const SemanticTable& table, const SplitSpec& split,
                                  const MarginMatrix& margins, const MapperParams& mapper,
                                  const ClassifierHead& seen_classifier, const RunConfig& config, std::uint64_t seed);

// n_per_class features per class with the given label and a full-frame
// placeholder box.
FeatureSet synthesize(const SynthesizerParams& params, const SemanticTable& table,
                      const std::vector<ClassId>& class_ids, std::size_t n_per_class, std::uint64_t seed);

inline const Box kSyntheticBox{0.0, 0.0, 1.0, 1.0};

void save_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

} // namespace zsd

#endif // ZSD_SYNTHESIZER_HPP
