#include "zsd/nn.hpp"
#include "zsd/error.hpp"

#include <cmath>

namespace zsd {

Mat activate(const Mat& pre, Activation act)
{
    switch (act) {
    case Activation::Identity:
        return pre;
    case Activation::Relu:
        return pre.cwiseMax(0.0);
    case Activation::LeakyRelu:
        return pre.unaryExpr([](double v) { return v >= 0.0 ? v : kLeakySlope * v; });
    }
    return pre;
}

Mat activation_slope(const Mat& pre, Activation act)
{
    switch (act) {
    case Activation::Identity:
        return Mat::Ones(pre.rows(), pre.cols());
    case Activation::Relu:
        return pre.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : 0.0; });
    case Activation::LeakyRelu:
        return pre.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : kLeakySlope; });
    }
    return Mat::Ones(pre.rows(), pre.cols());
}

MlpGrad& MlpGrad::operator+=(const MlpGrad& other)
{
    w1 += other.w1;
    b1 += other.b1;
    w2 += other.w2;
    b2 += other.b2;
    return *this;
}

MlpGrad& MlpGrad::operator*=(double s)
{
    w1 *= s;
    b1 *= s;
    w2 *= s;
    b2 *= s;
    return *this;
}

Mlp Mlp::zeros(int in, int hidden, int out, Activation act)
{
    return Mlp{Mat::Zero(hidden, in), Vec::Zero(hidden), Mat::Zero(out, hidden), Vec::Zero(out), act};
}

Mlp Mlp::init(int in, int hidden, int out, Activation act, std::mt19937_64& rng)
{
    Mlp net = zeros(in, hidden, out, act);
    const double a1 = std::sqrt(6.0 / in);
    const double a2 = std::sqrt(6.0 / hidden);
    std::uniform_real_distribution<double> u1(-a1, a1);
    std::uniform_real_distribution<double> u2(-a2, a2);
    for (Eigen::Index c = 0; c < net.w1.cols(); ++c) {
        for (Eigen::Index r = 0; r < net.w1.rows(); ++r) {
            net.w1(r, c) = u1(rng);
        }
    }
    for (Eigen::Index c = 0; c < net.w2.cols(); ++c) {
        for (Eigen::Index r = 0; r < net.w2.rows(); ++r) {
            net.w2(r, c) = u2(rng);
        }
    }
    return net;
}

std::size_t Mlp::parameter_count() const
{
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

Mat Mlp::forward(const Mat& x) const
{
    Cache cache;
    return forward(x, cache);
}

Mat Mlp::forward(const Mat& x, Cache& cache) const
{
    if (x.rows() != in_dim()) {
        throw ValidationError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(in_dim()));
    }
    cache.input = x;
    cache.pre = (w1 * x).colwise() + b1;
    cache.hidden = activate(cache.pre, act);
    return (w2 * cache.hidden).colwise() + b2;
}

MlpGrad Mlp::backward(const Cache& cache, const Mat& d_out, Mat* d_in) const
{
    MlpGrad g;
    g.w2 = d_out * cache.hidden.transpose();
    g.b2 = d_out.rowwise().sum();
    const Mat d_pre = (w2.transpose() * d_out).cwiseProduct(activation_slope(cache.pre, act));
    g.w1 = d_pre * cache.input.transpose();
    g.b1 = d_pre.rowwise().sum();
    if (d_in != nullptr) {
        *d_in = w1.transpose() * d_pre;
    }
    return g;
}

MlpGrad Mlp::zero_grad() const
{
    return MlpGrad{Mat::Zero(w1.rows(), w1.cols()), Vec::Zero(b1.size()), Mat::Zero(w2.rows(), w2.cols()),
                   Vec::Zero(b2.size())};
}

bool Mlp::finite() const
{
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

bool operator==(const Mlp& a, const Mlp& b)
{
    return a.act == b.act && a.w1.rows() == b.w1.rows() && a.w1.cols() == b.w1.cols() &&
           a.w2.rows() == b.w2.rows() && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
}

namespace {

template<typename Dst, typename Src>
void copy_out(Dst& flat, Eigen::Index& at, const Src& m)
{
    flat.segment(at, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
    at += m.size();
}

template<typename Dst>
void copy_in(Dst& m, const Vec& flat, Eigen::Index& at)
{
    Eigen::Map<Vec>(m.data(), m.size()) = flat.segment(at, m.size());
    at += m.size();
}

const char* activation_name(Activation act)
{
    switch (act) {
    case Activation::Identity:
        return "identity";
    case Activation::Relu:
        return "relu";
    case Activation::LeakyRelu:
        return "leaky_relu";
    }
    return "identity";
}

Activation activation_from(const std::string& name)
{
    if (name == "identity") {
        return Activation::Identity;
    }
    if (name == "relu") {
        return Activation::Relu;
    }
    if (name == "leaky_relu") {
        return Activation::LeakyRelu;
    }
    throw ValidationError("unknown activation '" + name + "'");
}

} // namespace

Vec flatten(const Mlp& net)
{
    Vec flat(static_cast<Eigen::Index>(net.parameter_count()));
    Eigen::Index at = 0;
    copy_out(flat, at, net.w1);
    copy_out(flat, at, net.b1);
    copy_out(flat, at, net.w2);
    copy_out(flat, at, net.b2);
    return flat;
}

Vec flatten(const MlpGrad& grad)
{
    Vec flat(grad.w1.size() + grad.b1.size() + grad.w2.size() + grad.b2.size());
    Eigen::Index at = 0;
    copy_out(flat, at, grad.w1);
    copy_out(flat, at, grad.b1);
    copy_out(flat, at, grad.w2);
    copy_out(flat, at, grad.b2);
    return flat;
}

void assign(Mlp& net, const Vec& flat)
{
    if (flat.size() != static_cast<Eigen::Index>(net.parameter_count())) {
        throw ValidationError("parameter vector has the wrong length");
    }
    Eigen::Index at = 0;
    copy_in(net.w1, flat, at);
    copy_in(net.b1, flat, at);
    copy_in(net.w2, flat, at);
    copy_in(net.b2, flat, at);
}

nlohmann::json matrix_to_json(const Mat& m)
{
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            data.push_back(m(r, c));
        }
    }
    return {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Mat matrix_from_json(const nlohmann::json& doc)
{
    const auto& shape = doc.at("shape");
    const auto& data = doc.at("data");
    if (!shape.is_array() || shape.size() != 2 || !data.is_array()) {
        throw ValidationError("malformed array: expected {shape:[rows,cols], data:[...]}");
    }
    const auto rows = shape[0].get<Eigen::Index>();
    const auto cols = shape[1].get<Eigen::Index>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw ValidationError("malformed array: data length does not match shape");
    }
    Mat m(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = data[i++].get<double>();
        }
    }
    return m;
}

nlohmann::json mlp_to_json(const Mlp& net)
{
    return {
        {"activation", activation_name(net.act)},
        {"w1", matrix_to_json(net.w1)},
        {"b1", matrix_to_json(net.b1)},
        {"w2", matrix_to_json(net.w2)},
        {"b2", matrix_to_json(net.b2)},
    };
}

Mlp mlp_from_json(const nlohmann::json& doc)
{
    Mlp net;
    net.act = activation_from(doc.at("activation").get<std::string>());
    net.w1 = matrix_from_json(doc.at("w1"));
    net.b1 = matrix_from_json(doc.at("b1"));
    net.w2 = matrix_from_json(doc.at("w2"));
    net.b2 = matrix_from_json(doc.at("b2"));
    if (net.b1.size() != net.w1.rows() || net.w2.cols() != net.w1.rows() || net.b2.size() != net.w2.rows()) {
        throw ValidationError("network layer shapes are inconsistent");
    }
    return net;
}

Adam::Adam(const Mlp& shape, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(shape.zero_grad()), v_(shape.zero_grad())
{
}

void Adam::step(Mlp& net, const MlpGrad& grad)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    update(net.w1, m_.w1, v_.w1, grad.w1);
    update(net.b1, m_.b1, v_.b1, grad.b1);
    update(net.w2, m_.w2, v_.w2, grad.w2);
    update(net.b2, m_.b2, v_.b2, grad.b2);
}

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat out(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            out(r, c) = normal(rng);
        }
    }
    return out;
}

} // namespace zsd
