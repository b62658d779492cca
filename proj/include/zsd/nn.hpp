#ifndef ZSD_NN_HPP
#define ZSD_NN_HPP

#include "zsd/types.hpp"

#include <nlohmann/json.hpp>

#include <random>

namespace zsd {

enum class Activation { Identity, Relu, LeakyRelu };

inline constexpr double kLeakySlope = 0.2;

// Elementwise hidden nonlinearity and its derivative (taken as the right
// derivative at the kink).
Mat activate(const Mat& pre, Activation act);
Mat activation_slope(const Mat& pre, Activation act);

struct MlpGrad {
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;

    MlpGrad& operator+=(const MlpGrad& other);
    MlpGrad& operator*=(double s);
};

// in -> hidden -> out with one hidden nonlinearity and a linear output layer.
// Batches are column-major: one sample per column.
struct Mlp {
    Mat w1; // hidden x in
    Vec b1;
    Mat w2; // out x hidden
    Vec b2;
    Activation act = Activation::LeakyRelu;

    struct Cache {
        Mat input;
        Mat pre;
        Mat hidden;
    };

    static Mlp zeros(int in, int hidden, int out, Activation act);
    // He-style uniform initialization, biases zero.
    static Mlp init(int in, int hidden, int out, Activation act, std::mt19937_64& rng);

    [[nodiscard]] int in_dim() const { return static_cast<int>(w1.cols()); }
    [[nodiscard]] int hidden_dim() const { return static_cast<int>(w1.rows()); }
    [[nodiscard]] int out_dim() const { return static_cast<int>(w2.rows()); }
    [[nodiscard]] std::size_t parameter_count() const;

    [[nodiscard]] Mat forward(const Mat& x) const;
    [[nodiscard]] Mat forward(const Mat& x, Cache& cache) const;

    // Parameter gradient for the upstream gradient d_out (out x n); writes the
    // input gradient to d_in when non-null.
    MlpGrad backward(const Cache& cache, const Mat& d_out, Mat* d_in = nullptr) const;

    [[nodiscard]] MlpGrad zero_grad() const;

    [[nodiscard]] bool finite() const;

    friend bool operator==(const Mlp& a, const Mlp& b);
};

// Flat parameter view, order w1, b1, w2, b2 (column-major within each).
Vec flatten(const Mlp& net);
Vec flatten(const MlpGrad& grad);
void assign(Mlp& net, const Vec& flat);

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& doc);

// Shape-tagged row-major array.
nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& doc);

class Adam {
public:
    Adam() = default;
    Adam(const Mlp& shape, double lr, double beta1, double beta2, double eps = 1e-8);

    void step(Mlp& net, const MlpGrad& grad);

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long t_ = 0;
    MlpGrad m_;
    MlpGrad v_;
};

// i.i.d. standard normal matrix with rows x cols entries.
Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

} // namespace zsd

#endif // ZSD_NN_HPP
