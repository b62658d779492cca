#include "support/generators.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

#include "zsd/error.hpp"
#include "zsd/pipeline.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace zsd;

namespace {

RunConfig tiny_config()
{
    RunConfig c;
    c.hidden = 8;
    return c;
}

// Critic with Identity activation and one hidden unit: Q(f, p) = a . f + bias.
Mlp linear_critic(const Vec& a, int sem_dim, double bias = 0.0)
{
    Mlp q = Mlp::zeros(static_cast<int>(a.size()) + sem_dim, 1, 1, Activation::Identity);
    q.w1.leftCols(a.size()) = a.transpose();
    q.w2(0, 0) = 1.0;
    q.b2[0] = bias;
    return q;
}

Mlp constant_critic(int in, double k)
{
    Mlp q = Mlp::zeros(in, 3, 1, Activation::LeakyRelu);
    q.b2[0] = k;
    return q;
}

// G(z, p) = diag(scales) z, ignoring p.
SynthesizerParams linear_generator(const Vec& scales, int sem_dim)
{
    const auto z = static_cast<int>(scales.size());
    SynthesizerParams s = init_synthesizer(z, sem_dim, z, tiny_config(), 0);
    s.generator = Mlp::zeros(z + sem_dim, z, z, Activation::Identity);
    s.generator.w1.leftCols(z) = Mat::Identity(z, z);
    s.generator.w2 = scales.asDiagonal();
    return s;
}

MarginMatrix two_class_margins(double delta)
{
    Mat v(2, 2);
    v << 0.0, delta, delta, 0.0;
    return MarginMatrix({1, 2}, v, {0.1, 1.0});
}

TrainingData tiny_data(std::uint64_t seed)
{
    BenchSpec spec;
    spec.seed = seed;
    spec.images = 20;
    spec.d = 6;
    spec.D = 10;
    const auto bench = generate_benchmark(spec);
    return {bench.semantics, bench.split, bench.train_seen, bench.train_background};
}

} // namespace

TEST_SUITE("synthesizer")
{
    TEST_CASE("generate")
    {
        SynthesizerParams s = init_synthesizer(3, 2, 4, tiny_config(), 1);
        const Vec z = Vec::Ones(3);
        const Vec p = Vec::Ones(2);
        CHECK(generate(s, z, p) == generate(s, z, p));
        CHECK(generate(s, z, p).size() == 4);
        s.generator = Mlp::zeros(5, 8, 4, Activation::LeakyRelu);
        CHECK(generate(s, z, p) == Vec::Zero(4));
        CHECK_THROWS_AS((void)generate(s, Vec::Ones(2), p), ValidationError);
    }

    TEST_CASE("critic output is scalar and deterministic")
    {
        const auto s = init_synthesizer(3, 2, 4, tiny_config(), 1);
        const Mat f = Mat::Ones(4, 5);
        const Mat p = Mat::Ones(2, 5);
        CHECK(critic_score(s, f, p).size() == 5);
        CHECK(critic_score(s, f, p) == critic_score(s, f, p));
    }

    TEST_CASE("sample_noise")
    {
        CHECK(sample_noise(5, 3, 7) == sample_noise(5, 3, 7));
        CHECK_FALSE(sample_noise(5, 3, 7) == sample_noise(5, 3, 8));
        CHECK(sample_noise(0, 3, 7).size() == 0);
        CHECK(sample_noise(4, 3, 7).rows() == 3);
    }

    TEST_CASE("gradient penalty examples")
    {
        SynthesizerParams s = init_synthesizer(2, 2, 3, tiny_config(), 0);
        const Vec a = Vec::Ones(3).normalized();
        s.critic = linear_critic(a, 2);
        const Vec real = Vec::Ones(3);
        const Vec fake = Vec::Zero(3);
        const Vec p = Vec::Ones(2);
        CHECK(gradient_penalty(s, real, fake, p, 0.3) == doctest::Approx(0.0).epsilon(1e-15));
        s.critic = constant_critic(5, 2.0);
        CHECK(gradient_penalty(s, real, fake, p, 0.3) == 1.0);
    }

    TEST_CASE("critic loss examples")
    {
        SynthesizerParams s = init_synthesizer(2, 2, 3, tiny_config(), 0);
        s.critic = constant_critic(5, 4.0);
        const Mat batch = Mat::Ones(3, 4);
        const Mat sem = Mat::Ones(2, 4);
        CHECK(loss_wgan_critic(s, batch, batch, sem, 10.0, 1) == doctest::Approx(10.0));
        s.critic = constant_critic(5, 0.0);
        CHECK(loss_wgan_critic(s, batch, Mat::Zero(3, 4), sem, 0.0, 1) == 0.0);
    }

    TEST_CASE("generator loss examples")
    {
        SynthesizerParams s = init_synthesizer(2, 2, 3, tiny_config(), 0);
        s.critic = constant_critic(5, 2.5);
        CHECK(loss_wgan_generator(s, Mat::Ones(3, 4), Mat::Ones(2, 4)) == doctest::Approx(-2.5));
        CHECK_THROWS_AS((void)loss_wgan_generator(s, Mat(3, 0), Mat(2, 0)), ValidationError);
    }

    TEST_CASE("classification loss examples")
    {
        const Mat f = Mat::Ones(2, 3);
        Vec b(2);
        b << 1000.0, 0.0;
        CHECK(loss_cls(ClassifierHead({1, 2}, Mat::Zero(2, 2), b), f, {1, 1, 1}) == 0.0);
        CHECK(loss_cls(ClassifierHead({1, 2, 3, 4}, Mat::Zero(4, 2), Vec::Zero(4)), f, {1, 2, 3}) ==
              doctest::Approx(std::log(4.0)));
        b << 1.0, 0.0;
        const double e = std::exp(1.0);
        CHECK(loss_cls(ClassifierHead({1, 2}, Mat::Zero(2, 2), b), f.leftCols(1), {1}) ==
              doctest::Approx(-std::log(e / (e + 1.0))));
        CHECK_THROWS_AS((void)loss_cls(ClassifierHead({1, 2}, Mat::Zero(2, 2), b), f, {1}), ValidationError);
    }

    TEST_CASE("mode-seeking ratio examples")
    {
        const Vec p = Vec::Ones(2);
        Vec z1(2);
        Vec z2(2);
        z1 << 0.5, -1.0;
        z2 << 1.5, 0.0;
        SynthesizerParams constant = linear_generator(Vec::Ones(2), 2);
        constant.generator.w2.setZero();
        CHECK(loss_ms(constant, z1, z2, p) == 0.0);
        CHECK(loss_ms(linear_generator(Vec::Ones(2), 2), z1, z2, p) == doctest::Approx(1.0));
        // |1 * -1| + |3 * -1| over |-1| + |-1|.
        CHECK(loss_ms(linear_generator((Vec(2) << 1.0, 3.0).finished(), 2), z1, z2, p) == doctest::Approx(2.0));
        CHECK_THROWS_AS((void)loss_ms(constant, z1, z1, p), ValidationError);
    }

    TEST_CASE("triplet mining examples")
    {
        const auto t = mine_triplets({7, 7, 9});
        REQUIRE(t.size() == 2);
        CHECK(t[0] == Triplet{0, 1, 2, 7, 9});
        CHECK(t[1] == Triplet{1, 0, 2, 7, 9});
        CHECK(mine_triplets({3, 3, 3, 3}).empty());
        CHECK(mine_triplets({}).empty());
    }

    TEST_CASE("mined triplets satisfy the label conditions and the closed-form count")
    {
        gen::Rng rng(12);
        for (int i = 0; i < 200; ++i) {
            const auto labels = gen::labels(rng, static_cast<std::size_t>(gen::uniform_int(rng, 0, 12)), 4);
            const auto t = mine_triplets(labels);
            CHECK(t.size() == oracle::triplet_count(labels));
            for (const auto& x : t) {
                CHECK(labels[x.anchor] == labels[x.positive]);
                CHECK(x.anchor != x.positive);
                CHECK(labels[x.negative] != labels[x.anchor]);
                CHECK(x.anchor_class == labels[x.anchor]);
                CHECK(x.negative_class == labels[x.negative]);
            }
        }
    }

    TEST_CASE("triplet loss examples")
    {
        const auto mm = two_class_margins(0.5);
        const auto trip = mine_triplets({1, 1, 2});
        Mat f(2, 3);
        f << 0.0, 0.0, 3.0, 0.0, 0.0, 0.0;
        CHECK(loss_triplet(f, trip, mm) == 0.0);
        CHECK(loss_triplet(Mat::Ones(2, 3), trip, mm) == doctest::Approx(0.5));
        // a=(0,0), p=(1,0), n=(0,1): hinges 1 - 1 + 0.5 and 1 - sqrt(2) + 0.5.
        f << 0.0, 1.0, 0.0, 0.0, 0.0, 1.0;
        const double expected = (0.5 + (1.5 - std::sqrt(2.0))) / 2.0;
        CHECK(loss_triplet(f, trip, mm) == doctest::Approx(expected));
        CHECK(oracle::triplet_loss(f, trip, mm) == doctest::Approx(expected));
        CHECK(loss_triplet(f, {}, mm) == 0.0);
    }

    TEST_CASE("triplet loss agrees with the plain loop and grows with an active margin")
    {
        gen::Rng rng(13);
        for (int i = 0; i < 100; ++i) {
            const auto labels = gen::labels(rng, 7, 2);
            const auto trip = mine_triplets(labels);
            const Mat f = standard_normal(3, 7, rng);
            const double delta = gen::uniform(rng, 0.1, 1.0);
            const double lo = loss_triplet(f, trip, two_class_margins(delta));
            CHECK(lo == doctest::Approx(oracle::triplet_loss(f, trip, two_class_margins(delta))));
            bool active = false;
            for (const auto& t : trip) {
                const auto a = static_cast<Eigen::Index>(t.anchor);
                active = active || (f.col(a) - f.col(static_cast<Eigen::Index>(t.positive))).norm() -
                                           (f.col(a) - f.col(static_cast<Eigen::Index>(t.negative))).norm() + delta >
                                       0.0;
            }
            if (active) {
                CHECK(loss_triplet(f, trip, two_class_margins(delta + 0.1)) > lo);
            }
        }
    }

    TEST_CASE("cycle-consistency examples")
    {
        // G(z, p) = p and M = identity through relu(x) - relu(-x).
        SynthesizerParams s = init_synthesizer(2, 3, 3, tiny_config(), 0);
        s.generator = Mlp::zeros(5, 3, 3, Activation::Identity);
        s.generator.w1.rightCols(3) = Mat::Identity(3, 3);
        s.generator.w2 = Mat::Identity(3, 3);
        MapperParams m{Mlp::zeros(3, 6, 3, Activation::Relu)};
        m.net.w1 << Mat::Identity(3, 3), -Mat::Identity(3, 3);
        m.net.w2 << Mat::Identity(3, 3), -Mat::Identity(3, 3);
        gen::Rng rng(2);
        const Mat z = standard_normal(2, 6, rng);
        const Mat p = standard_normal(3, 6, rng);
        CHECK(loss_cycon(m, s, z, p) == doctest::Approx(0.0).epsilon(1e-15));
        const MapperParams zero{Mlp::zeros(3, 6, 3, Activation::Relu)};
        CHECK(loss_cycon(zero, s, z, p) == doctest::Approx(p.squaredNorm() / 6.0));
    }

    TEST_CASE("analytic gradients on a few random instances")
    {
        for (const auto& r : check::gradient_suite(4, 3)) {
            INFO(r.term);
            CHECK(r.worst < 1e-4);
        }
    }

    TEST_CASE("synthesize")
    {
        gen::Rng rng(5);
        const auto table = gen::semantic_table(rng, 15, 4);
        const auto s = init_synthesizer(4, 4, 6, tiny_config(), 2);
        CHECK(synthesize(s, table, table.ids(), 0, 1).empty());
        const auto out = synthesize(s, table, table.ids(), 250, 1);
        CHECK(out.size() == 3750);
        CHECK(out.dim == 6);
        CHECK(out == synthesize(s, table, table.ids(), 250, 1));
        CHECK_THROWS_AS((void)synthesize(s, table, {99}, 1, 1), ValidationError);
    }

    TEST_CASE("zero epochs return the initialization and training is deterministic")
    {
        const auto data = tiny_data(3);
        RunConfig c = tiny_config();
        c.epochs = 0;
        c.mapper_epochs = 2;
        c.cls_epochs = 2;
        const auto model = train_model(data, c);
        CHECK(model.synthesis.params == init_synthesizer(6, 6, 10, c, StageSeeds::from(c.seed).synthesizer));

        c.epochs = 2;
        const auto a = train_model(data, c);
        const auto b = train_model(data, c);
        CHECK(a.synthesis.params == b.synthesis.params);
        CHECK_FALSE(a.synthesis.params == model.synthesis.params);
        CHECK(a.synthesis.log.size() == 2);
    }

    TEST_CASE("loss log layout")
    {
        const auto path = std::filesystem::temp_directory_path() / "zsd_test_loss_log.csv";
        save_loss_log({EpochLog{1, 0.5, -0.25, 1.0, 0.1, 2.0, 0.3, 0.7, -1.2}}, path);
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        CHECK(header.rfind("epoch,L_wgan_c,L_wgan_g,L_cls,L_ms,L_cycon,L_triplet", 0) == 0);
        std::filesystem::remove(path);
    }

    TEST_CASE("training validates its inputs")
    {
        auto data = tiny_data(4);
        RunConfig c = tiny_config();
        c.epochs = 1;
        c.mapper_epochs = 1;
        c.cls_epochs = 1;
        data.train_seen.records[0].label = data.split.unseen[0];
        CHECK_THROWS_AS((void)train_model(data, c), ValidationError);
    }
}
