#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "common.hpp"

namespace nonsens::nn {

struct Layer {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;  // out
};

// Plain MLP: affine layers with leaky-ReLU between them; the final layer's
// output is linear. The derivative at a pre-activation of exactly 0 takes the
// negative-slope branch.
struct Mlp {
    std::vector<Layer> layers;
    double slope = 0.2;

    Eigen::Index inputDim() const { return layers.front().w.cols(); }
    Eigen::Index outputDim() const { return layers.back().w.rows(); }
};

inline double lrelu(double z, double slope) { return z > 0.0 ? z : slope * z; }
inline double lrelu_deriv(double z, double slope) { return z > 0.0 ? 1.0 : slope; }

inline Mlp make_mlp(const std::vector<int>& dims, double slope, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output dims");
    Mlp mlp;
    mlp.slope = slope;
    Rng rng(mix_seed(seed, 0x71e77eULL));
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int in = dims[l], out = dims[l + 1];
        if (in < 1 || out < 1) throw std::invalid_argument("make_mlp: non-positive layer size");
        Layer layer;
        layer.w.resize(out, in);
        const double bound = std::sqrt(6.0 / (in + out));
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) layer.w(r, c) = rng.uniform(-bound, bound);
        layer.b = Eigen::VectorXd::Zero(out);
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

// rows of x are samples
inline Eigen::MatrixXd forward_batch(const Mlp& mlp, const Eigen::MatrixXd& x) {
    if (x.cols() != mlp.inputDim()) throw std::invalid_argument("forward: input dim mismatch");
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        Eigen::MatrixXd z = (a * mlp.layers[l].w.transpose()).rowwise() + mlp.layers[l].b.transpose();
        if (l + 1 < mlp.layers.size())
            a = z.unaryExpr([s = mlp.slope](double v) { return lrelu(v, s); });
        else
            a = std::move(z);
    }
    return a;
}

inline Eigen::VectorXd forward(const Mlp& mlp, const Eigen::VectorXd& x) {
    return forward_batch(mlp, x.transpose()).row(0);
}

// Jacobian of the network output with respect to one input point (out x in).
inline Eigen::MatrixXd input_jacobian(const Mlp& mlp, const Eigen::VectorXd& x) {
    if (x.size() != mlp.inputDim()) throw std::invalid_argument("input_jacobian: input dim mismatch");
    std::vector<Eigen::VectorXd> preacts;
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        Eigen::VectorXd z = mlp.layers[l].w * a + mlp.layers[l].b;
        if (l + 1 < mlp.layers.size()) {
            preacts.push_back(z);
            a = z.unaryExpr([s = mlp.slope](double v) { return lrelu(v, s); });
        }
    }
    Eigen::MatrixXd j = mlp.layers.back().w;
    for (std::size_t l = mlp.layers.size() - 1; l-- > 0;) {
        Eigen::VectorXd d =
            preacts[l].unaryExpr([s = mlp.slope](double v) { return lrelu_deriv(v, s); });
        j = j * d.asDiagonal() * mlp.layers[l].w;
    }
    return j;
}

// Multinomial head. With pinFirst the first class keeps zero weights and bias
// through construction and training, so its logit is identically 0 and the
// softmax denominator is 1 + sum over the remaining classes.
struct SoftmaxHead {
    Eigen::MatrixXd w;  // classes x features
    Eigen::VectorXd b;
    bool pinFirst = true;
};

struct Classifier {
    Mlp trunk;
    SoftmaxHead head;
};

inline Classifier make_classifier(int inputDim, const std::vector<int>& hidden, int features,
                                  int classes, double slope, std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("make_classifier: need at least 2 classes");
    std::vector<int> dims;
    dims.push_back(inputDim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(features);
    Classifier c;
    c.trunk = make_mlp(dims, slope, seed);
    Rng rng(mix_seed(seed, 0x4ea6ULL));
    c.head.w.resize(classes, features);
    const double bound = std::sqrt(6.0 / (features + classes));
    for (int r = 0; r < classes; ++r)
        for (int f = 0; f < features; ++f) c.head.w(r, f) = rng.uniform(-bound, bound);
    c.head.b = Eigen::VectorXd::Zero(classes);
    c.head.pinFirst = true;
    c.head.w.row(0).setZero();
    c.head.b[0] = 0.0;
    return c;
}

inline Eigen::MatrixXd logits(const Classifier& c, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd h = forward_batch(c.trunk, x);
    return (h * c.head.w.transpose()).rowwise() + c.head.b.transpose();
}

namespace detail {

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd p = z;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double m = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - m).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

} // namespace detail

inline double ce_loss(const Classifier& c, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
    if (x.rows() != static_cast<Eigen::Index>(labels.size()))
        throw std::invalid_argument("ce_loss: label count mismatch");
    const Eigen::MatrixXd z = logits(c, x);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        const double lse = m + std::log((z.row(i).array() - m).exp().sum());
        loss += lse - z(i, labels[static_cast<std::size_t>(i)]);
    }
    return loss / static_cast<double>(z.rows());
}

struct ClassifierGrad {
    std::vector<Layer> trunk;
    Eigen::MatrixXd headW;
    Eigen::VectorXd headB;
};

// Mean cross-entropy over the batch and its exact reverse-mode gradient.
inline std::pair<double, ClassifierGrad> ce_loss_grad(const Classifier& c, const Eigen::MatrixXd& x,
                                                      const std::vector<int>& labels) {
    const Eigen::Index n = x.rows();
    if (n != static_cast<Eigen::Index>(labels.size()))
        throw std::invalid_argument("ce_loss_grad: label count mismatch");
    const std::size_t numLayers = c.trunk.layers.size();

    std::vector<Eigen::MatrixXd> preacts(numLayers);
    std::vector<Eigen::MatrixXd> acts(numLayers + 1);
    acts[0] = x;
    for (std::size_t l = 0; l < numLayers; ++l) {
        preacts[l] =
            (acts[l] * c.trunk.layers[l].w.transpose()).rowwise() + c.trunk.layers[l].b.transpose();
        if (l + 1 < numLayers)
            acts[l + 1] = preacts[l].unaryExpr([s = c.trunk.slope](double v) { return lrelu(v, s); });
        else
            acts[l + 1] = preacts[l];
    }
    const Eigen::MatrixXd& h = acts[numLayers];
    Eigen::MatrixXd z = (h * c.head.w.transpose()).rowwise() + c.head.b.transpose();

    double loss = 0.0;
    Eigen::MatrixXd p = detail::softmax_rows(z);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = z.row(i).maxCoeff();
        const double lse = m + std::log((z.row(i).array() - m).exp().sum());
        loss += lse - z(i, labels[static_cast<std::size_t>(i)]);
        p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    }
    loss /= static_cast<double>(n);
    p /= static_cast<double>(n);

    ClassifierGrad g;
    g.headW = p.transpose() * h;
    g.headB = p.colwise().sum();
    if (c.head.pinFirst) {
        g.headW.row(0).setZero();
        g.headB[0] = 0.0;
    }

    Eigen::MatrixXd delta = p * c.head.w;  // dLoss/dH
    g.trunk.resize(numLayers);
    for (std::size_t l = numLayers; l-- > 0;) {
        if (l + 1 < numLayers) {
            Eigen::MatrixXd dphi = preacts[l].unaryExpr(
                [s = c.trunk.slope](double v) { return lrelu_deriv(v, s); });
            delta = delta.cwiseProduct(dphi);
        }
        g.trunk[l].w = delta.transpose() * acts[l];
        g.trunk[l].b = delta.colwise().sum();
        if (l > 0) delta = delta * c.trunk.layers[l].w;
    }
    return {loss, std::move(g)};
}

struct SgdConfig {
    int epochs = 300;
    int batch = 128;
    double lr = 0.1;
    double momentum = 0.9;
};

struct TrainResult {
    std::vector<double> lossHistory;  // mean batch loss per epoch
    double finalLoss = 0.0;           // full-data loss after training
    double accuracy = 0.0;            // multiclass training accuracy
};

inline double multiclass_accuracy(const Classifier& c, const Eigen::MatrixXd& x,
                                  const std::vector<int>& labels) {
    const Eigen::MatrixXd z = logits(c, x);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index arg = 0;
        z.row(i).maxCoeff(&arg);
        if (arg == labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(z.rows());
}

// Minibatch SGD with momentum; the learning rate halves at each third of the
// run. Throws if the loss goes non-finite.
inline TrainResult sgd_train(Classifier& c, const Eigen::MatrixXd& x, const std::vector<int>& labels,
                             const SgdConfig& cfg, std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    if (n < 1) throw std::invalid_argument("sgd_train: empty data");
    if (cfg.batch < 1 || cfg.epochs < 1 || cfg.lr <= 0.0)
        throw std::invalid_argument("sgd_train: bad config");

    ClassifierGrad vel;
    vel.trunk.resize(c.trunk.layers.size());
    for (std::size_t l = 0; l < c.trunk.layers.size(); ++l) {
        vel.trunk[l].w = Eigen::MatrixXd::Zero(c.trunk.layers[l].w.rows(), c.trunk.layers[l].w.cols());
        vel.trunk[l].b = Eigen::VectorXd::Zero(c.trunk.layers[l].b.size());
    }
    vel.headW = Eigen::MatrixXd::Zero(c.head.w.rows(), c.head.w.cols());
    vel.headB = Eigen::VectorXd::Zero(c.head.b.size());

    Rng rng(mix_seed(seed, 0x59d11ULL));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    TrainResult res;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const int phase = (3 * epoch) / cfg.epochs;  // 0, 1, 2
        const double lr = cfg.lr * std::pow(0.5, phase);
        rng.shuffle(order);
        double epochLoss = 0.0;
        int batches = 0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch) {
            const Eigen::Index len = std::min<Eigen::Index>(cfg.batch, n - start);
            Eigen::MatrixXd bx(len, x.cols());
            std::vector<int> bl(static_cast<std::size_t>(len));
            for (Eigen::Index i = 0; i < len; ++i) {
                bx.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
                bl[static_cast<std::size_t>(i)] =
                    labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
            }
            auto [loss, g] = ce_loss_grad(c, bx, bl);
            if (!std::isfinite(loss)) throw std::runtime_error("sgd_train: training diverged");
            epochLoss += loss;
            ++batches;
            for (std::size_t l = 0; l < c.trunk.layers.size(); ++l) {
                vel.trunk[l].w = cfg.momentum * vel.trunk[l].w - lr * g.trunk[l].w;
                vel.trunk[l].b = cfg.momentum * vel.trunk[l].b - lr * g.trunk[l].b;
                c.trunk.layers[l].w += vel.trunk[l].w;
                c.trunk.layers[l].b += vel.trunk[l].b;
            }
            vel.headW = cfg.momentum * vel.headW - lr * g.headW;
            vel.headB = cfg.momentum * vel.headB - lr * g.headB;
            c.head.w += vel.headW;
            c.head.b += vel.headB;
            if (c.head.pinFirst) {
                c.head.w.row(0).setZero();
                c.head.b[0] = 0.0;
            }
        }
        res.lossHistory.push_back(epochLoss / std::max(1, batches));
    }
    res.finalLoss = ce_loss(c, x, labels);
    if (!std::isfinite(res.finalLoss)) throw std::runtime_error("sgd_train: training diverged");
    res.accuracy = multiclass_accuracy(c, x, labels);
    return res;
}

inline void to_json(nlohmann::json& j, const Layer& layer) {
    std::vector<double> w(layer.w.size());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), layer.w.rows(), layer.w.cols()) = layer.w;
    j = nlohmann::json{{"rows", layer.w.rows()},
                       {"cols", layer.w.cols()},
                       {"w", w},
                       {"b", std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size())}};
}

inline void from_json(const nlohmann::json& j, Layer& layer) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto w = j.at("w").get<std::vector<double>>();
    const auto b = j.at("b").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows)
        throw std::invalid_argument("layer: shape mismatch in serialized form");
    layer.w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), rows, cols);
    layer.b = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
}

inline void to_json(nlohmann::json& j, const Mlp& mlp) {
    j = nlohmann::json{{"layers", mlp.layers}, {"slope", mlp.slope}};
}

inline void from_json(const nlohmann::json& j, Mlp& mlp) {
    j.at("layers").get_to(mlp.layers);
    j.at("slope").get_to(mlp.slope);
    if (mlp.layers.empty()) throw std::invalid_argument("mlp: no layers");
}

inline void to_json(nlohmann::json& j, const SoftmaxHead& head) {
    Layer asLayer{head.w, head.b};
    nlohmann::json inner;
    to_json(inner, asLayer);
    j = nlohmann::json{{"layer", inner}, {"pinFirst", head.pinFirst}};
}

inline void from_json(const nlohmann::json& j, SoftmaxHead& head) {
    Layer asLayer;
    from_json(j.at("layer"), asLayer);
    head.w = std::move(asLayer.w);
    head.b = std::move(asLayer.b);
    j.at("pinFirst").get_to(head.pinFirst);
}

inline void to_json(nlohmann::json& j, const Classifier& c) {
    j = nlohmann::json{{"trunk", c.trunk}, {"head", c.head}};
}

inline void from_json(const nlohmann::json& j, Classifier& c) {
    j.at("trunk").get_to(c.trunk);
    j.at("head").get_to(c.head);
}

} // namespace nonsens::nn
