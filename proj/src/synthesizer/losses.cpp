#include "zsd/error.hpp"
#include "zsd/synthesizer.hpp"

#include <cmath>
#include <unordered_map>

namespace zsd {

namespace {

void require_columns(const Mat& a, const Mat& b, const char* what)
{
    if (a.cols() != b.cols()) {
        throw ValidationError(std::string(what) + ": batch sizes differ");
    }
}

void require_nonempty(const Mat& m, const char* what)
{
    if (m.cols() == 0) {
        throw ValidationError(std::string(what) + ": empty batch");
    }
}

} // namespace

SynthesizerParams init_synthesizer(int z_dim, int semantic_dim, int feature_dim, const RunConfig& config,
                                   std::uint64_t seed)
{
    std::mt19937_64 rng(derive_seed(seed, 30));
    SynthesizerParams params;
    params.generator = Mlp::init(z_dim + semantic_dim, config.hidden, feature_dim, Activation::LeakyRelu, rng);
    params.critic = Mlp::init(feature_dim + semantic_dim, config.hidden, 1, Activation::LeakyRelu, rng);
    params.z_dim = z_dim;
    params.semantic_dim = semantic_dim;
    params.feature_dim = feature_dim;
    params.config = config;
    params.epoch = 0;
    return params;
}

Mat concat_rows(const Mat& top, const Mat& bottom)
{
    require_columns(top, bottom, "concat_rows");
    Mat out(top.rows() + bottom.rows(), top.cols());
    out.topRows(top.rows()) = top;
    out.bottomRows(bottom.rows()) = bottom;
    return out;
}

Mat generate(const SynthesizerParams& params, const Mat& z, const Mat& p)
{
    if (z.rows() != params.generator.in_dim() - p.rows() || p.rows() != params.semantic_dim) {
        throw ValidationError("generate: noise or semantic dimension mismatch");
    }
    return params.generator.forward(concat_rows(z, p));
}

Vec generate(const SynthesizerParams& params, const Vec& z, const Vec& p)
{
    return generate(params, Mat(z), Mat(p));
}

Vec critic_score(const SynthesizerParams& params, const Mat& f, const Mat& p)
{
    if (f.rows() != params.feature_dim || p.rows() != params.semantic_dim) {
        throw ValidationError("critic_score: feature or semantic dimension mismatch");
    }
    return params.critic.forward(concat_rows(f, p)).row(0).transpose();
}

double critic_score(const SynthesizerParams& params, const Vec& f, const Vec& p)
{
    return critic_score(params, Mat(f), Mat(p))[0];
}

Mat sample_noise(std::size_t n, int z_dim, std::uint64_t seed)
{
    std::mt19937_64 rng(derive_seed(seed, 31));
    return standard_normal(z_dim, static_cast<Eigen::Index>(n), rng);
}

Mat critic_input_gradient(const Mlp& critic, const Mat& f, const Mat& p)
{
    const Mat pre = (critic.w1 * concat_rows(f, p)).colwise() + critic.b1;
    const Mat v = activation_slope(pre, critic.act).array().colwise() * critic.w2.row(0).transpose().array();
    return critic.w1.leftCols(f.rows()).transpose() * v;
}

double gradient_penalty(const SynthesizerParams& params, const Vec& f_real, const Vec& f_fake, const Vec& p,
                        double rho)
{
    if (f_real.size() != params.feature_dim || f_fake.size() != params.feature_dim ||
        p.size() != params.semantic_dim) {
        throw ValidationError("gradient_penalty: dimension mismatch");
    }
    const Vec f_hat = rho * f_real + (1.0 - rho) * f_fake;
    const double norm = critic_input_gradient(params.critic, f_hat, p).norm();
    return (norm - 1.0) * (norm - 1.0);
}

CriticLoss wgan_critic_terms(const Mlp& critic, const Mat& real, const Mat& fake, const Mat& semantics, double lambda,
                             const Vec& rhos)
{
    require_nonempty(real, "loss_wgan_critic");
    require_columns(real, fake, "loss_wgan_critic");
    require_columns(real, semantics, "loss_wgan_critic");
    if (rhos.size() != real.cols()) {
        throw ValidationError("loss_wgan_critic: need one interpolation weight per sample");
    }
    const auto n = real.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    const auto feat_dim = real.rows();

    // Adversarial part: one pass over [fake | real].
    Mat both(feat_dim + semantics.rows(), 2 * n);
    both.topLeftCorner(feat_dim, n) = fake;
    both.topRightCorner(feat_dim, n) = real;
    both.bottomLeftCorner(semantics.rows(), n) = semantics;
    both.bottomRightCorner(semantics.rows(), n) = semantics;
    Mlp::Cache cache;
    const Mat scores = critic.forward(both, cache);
    Mat d_out(1, 2 * n);
    d_out.leftCols(n).setConstant(inv_n);
    d_out.rightCols(n).setConstant(-inv_n);

    CriticLoss out;
    out.gap = scores.rightCols(n).sum() * inv_n - scores.leftCols(n).sum() * inv_n;
    out.grad = critic.backward(cache, d_out);

    // Gradient penalty. The hidden slope is piecewise constant, so the
    // penalty depends on the parameters only through W1[:, :D] and w2.
    const Mat f_hat = real.array().rowwise() * rhos.transpose().array() +
                      fake.array().rowwise() * (1.0 - rhos.array()).transpose();
    const Mat pre = (critic.w1 * concat_rows(f_hat, semantics)).colwise() + critic.b1;
    const Mat slope = activation_slope(pre, critic.act);
    const Mat v = slope.array().colwise() * critic.w2.row(0).transpose().array();
    const auto w1_feat = critic.w1.leftCols(feat_dim);
    const Mat g = w1_feat.transpose() * v;
    Mat u(feat_dim, n);
    double penalty = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = g.col(i).norm();
        penalty += (norm - 1.0) * (norm - 1.0);
        u.col(i) = norm > 0.0 ? Vec(g.col(i) * (2.0 * (norm - 1.0) / norm * lambda * inv_n)) : Vec::Zero(feat_dim);
    }
    out.penalty = penalty * inv_n;
    out.grad.w1.leftCols(feat_dim) += v * u.transpose();
    out.grad.w2.row(0) += (slope.cwiseProduct(w1_feat * u)).rowwise().sum().transpose();

    out.value = -out.gap + lambda * out.penalty;
    return out;
}

double loss_wgan_critic(const SynthesizerParams& params, const Mat& real, const Mat& fake, const Mat& semantics,
                        double lambda, std::uint64_t seed)
{
    std::mt19937_64 rng(derive_seed(seed, 32));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec rhos(real.cols());
    for (Eigen::Index i = 0; i < rhos.size(); ++i) {
        rhos[i] = u(rng);
    }
    return wgan_critic_terms(params.critic, real, fake, semantics, lambda, rhos).value;
}

FeatureLoss wgan_generator_terms(const Mlp& critic, const Mat& fake, const Mat& semantics)
{
    require_nonempty(fake, "loss_wgan_generator");
    require_columns(fake, semantics, "loss_wgan_generator");
    const double inv_n = 1.0 / static_cast<double>(fake.cols());
    FeatureLoss out;
    out.value = -critic.forward(concat_rows(fake, semantics)).sum() * inv_n;
    out.grad = -inv_n * critic_input_gradient(critic, fake, semantics);
    return out;
}

double loss_wgan_generator(const SynthesizerParams& params, const Mat& fake, const Mat& semantics)
{
    return wgan_generator_terms(params.critic, fake, semantics).value;
}

FeatureLoss cls_terms(const ClassifierHead& classifier, const Mat& fake, const std::vector<ClassId>& labels)
{
    require_nonempty(fake, "loss_cls");
    if (static_cast<Eigen::Index>(labels.size()) != fake.cols()) {
        throw ValidationError("loss_cls: one label per feature required");
    }
    const Mat logits = classifier.logits(fake);
    const double inv_n = 1.0 / static_cast<double>(fake.cols());
    Mat delta = softmax(logits);
    FeatureLoss out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(classifier.index_of(labels[i]));
        const auto c = static_cast<Eigen::Index>(i);
        // log-softmax directly, so an underflowed probability still gives a finite loss
        const Vec shifted = logits.col(c).array() - logits.col(c).maxCoeff();
        out.value -= shifted[r] - std::log(shifted.array().exp().sum());
        delta(r, c) -= 1.0;
    }
    out.value *= inv_n;
    out.grad = classifier.weights().transpose() * delta * inv_n;
    return out;
}

double loss_cls(const ClassifierHead& classifier, const Mat& fake, const std::vector<ClassId>& labels)
{
    return cls_terms(classifier, fake, labels).value;
}

DiversityLoss ms_terms(const Mat& fake1, const Mat& fake2, const Mat& z1, const Mat& z2)
{
    require_nonempty(fake1, "loss_ms");
    require_columns(fake1, fake2, "loss_ms");
    require_columns(fake1, z1, "loss_ms");
    require_columns(z1, z2, "loss_ms");
    const auto n = fake1.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    DiversityLoss out;
    out.grad_first = Mat::Zero(fake1.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dz = (z1.col(i) - z2.col(i)).lpNorm<1>();
        if (dz <= kNoisePairEpsilon) {
            throw ValidationError("degenerate noise pair");
        }
        const Vec diff = fake1.col(i) - fake2.col(i);
        out.value += diff.lpNorm<1>() / dz;
        out.grad_first.col(i) = diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }) *
                                (inv_n / dz);
    }
    out.value *= inv_n;
    out.grad_second = -out.grad_first;
    return out;
}

double loss_ms(const SynthesizerParams& params, const Vec& z1, const Vec& z2, const Vec& p)
{
    return ms_terms(generate(params, Mat(z1), Mat(p)), generate(params, Mat(z2), Mat(p)), z1, z2).value;
}

std::vector<Triplet> mine_triplets(const std::vector<ClassId>& labels)
{
    std::vector<Triplet> out;
    const std::size_t n = labels.size();
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t p = 0; p < n; ++p) {
            if (p == a || labels[p] != labels[a]) {
                continue;
            }
            for (std::size_t neg = 0; neg < n; ++neg) {
                if (labels[neg] != labels[a]) {
                    out.push_back({a, p, neg, labels[a], labels[neg]});
                }
            }
        }
    }
    return out;
}

FeatureLoss triplet_terms(const Mat& features, const std::vector<Triplet>& triplets, const MarginMatrix& margins)
{
    const auto n = features.cols();
    FeatureLoss out;
    out.grad = Mat::Zero(features.rows(), n);
    if (triplets.empty()) {
        return out;
    }
    // Pairwise distances, computed once.
    Mat dist(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            dist(i, j) = dist(j, i) = (features.col(i) - features.col(j)).norm();
        }
    }
    std::unordered_map<ClassId, std::size_t> slot;
    for (const auto& t : triplets) {
        slot.emplace(t.anchor_class, slot.size());
        slot.emplace(t.negative_class, slot.size());
    }
    Mat local(slot.size(), slot.size());
    for (const auto& [a, i] : slot) {
        for (const auto& [b, j] : slot) {
            local(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = margins.margin(a, b);
        }
    }

    const double inv_t = 1.0 / static_cast<double>(triplets.size());
    Mat weight = Mat::Zero(n, n); // signed pair weights of the active hinges
    for (const auto& t : triplets) {
        const auto a = static_cast<Eigen::Index>(t.anchor);
        const auto p = static_cast<Eigen::Index>(t.positive);
        const auto neg = static_cast<Eigen::Index>(t.negative);
        const double delta = local(static_cast<Eigen::Index>(slot[t.anchor_class]),
                                   static_cast<Eigen::Index>(slot[t.negative_class]));
        const double hinge = dist(a, p) - dist(a, neg) + delta;
        if (hinge > 0.0) {
            out.value += hinge;
            weight(a, p) += inv_t;
            weight(a, neg) -= inv_t;
        }
    }
    out.value *= inv_t;

    // grad f_i = sum_j K_ij (f_i - f_j) with K = (W + W^T) / dist.
    Mat k = weight + weight.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            k(i, j) = dist(i, j) > 0.0 ? k(i, j) / dist(i, j) : 0.0;
        }
    }
    out.grad = features * k.rowwise().sum().asDiagonal() - features * k;
    return out;
}

double loss_triplet(const Mat& features, const std::vector<Triplet>& triplets, const MarginMatrix& margins)
{
    return triplet_terms(features, triplets, margins).value;
}

FeatureLoss cycon_terms(const MapperParams& mapper, const Mat& fake, const Mat& semantics)
{
    require_nonempty(fake, "loss_cycon");
    require_columns(fake, semantics, "loss_cycon");
    if (semantics.rows() != mapper.semantic_dim()) {
        throw ValidationError("loss_cycon: semantic dimension mismatch");
    }
    Mlp::Cache cache;
    const Mat diff = mapper.net.forward(fake, cache) - semantics;
    const double inv_n = 1.0 / static_cast<double>(fake.cols());
    FeatureLoss out;
    out.value = diff.squaredNorm() * inv_n;
    mapper.net.backward(cache, 2.0 * inv_n * diff, &out.grad);
    return out;
}

double loss_cycon(const MapperParams& mapper, const SynthesizerParams& params, const Mat& z, const Mat& semantics)
{
    return cycon_terms(mapper, generate(params, z, semantics), semantics).value;
}

} // namespace zsd
