#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>

#include "common.hpp"
#include "neuralnet.hpp"
#include "smica.hpp"

namespace nonsens::tcl {

// Time-contrastive learning: train a classifier to predict the segment label;
// the trunk (everything up to the last hidden layer) then carries the
// nonstationary structure of the sources up to a linear map.
struct TclConfig {
    int netDepth = 1;      // number of affine trunk layers; 1 means a linear trunk
    int widthFactor = 2;   // hidden width = widthFactor * d
    double slope = 0.2;
    nn::SgdConfig sgd;
    std::uint64_t seed = 1;
};

struct FeatureExtractor {
    nn::Classifier net;
    double trainAccuracy = 0.0;
    double finalLoss = 0.0;
    int numSegments = 0;
    // accuracy <= 1/E + 0.02 indicates the contrastive task was not learned
    bool weakAccuracy = false;
};

inline FeatureExtractor tcl_train(const SegmentedDataset& data, const TclConfig& cfg) {
    data.validate();
    if (data.numSegments < 3)
        throw std::invalid_argument(
            "tcl_train: need at least three segments (distinct conditions); two are not "
            "sufficient for identifiability");
    if (cfg.netDepth < 1) throw std::invalid_argument("tcl_train: netDepth must be >= 1");

    const int d = static_cast<int>(data.d());
    std::vector<int> hidden(static_cast<std::size_t>(cfg.netDepth - 1), cfg.widthFactor * d);

    FeatureExtractor fx;
    fx.numSegments = data.numSegments;
    fx.net = nn::make_classifier(d, hidden, d, data.numSegments, cfg.slope,
                                 mix_seed(cfg.seed, 0x7c1ULL));
    auto res = nn::sgd_train(fx.net, data.x, data.seg, cfg.sgd, mix_seed(cfg.seed, 0x59dULL));
    fx.trainAccuracy = res.accuracy;
    fx.finalLoss = res.finalLoss;
    fx.weakAccuracy =
        res.accuracy <= 1.0 / static_cast<double>(data.numSegments) + 0.02;
    return fx;
}

// Trunk outputs (the learned feature space), one row per sample.
inline Eigen::MatrixXd hidden_representations(const FeatureExtractor& fx, const Eigen::MatrixXd& x) {
    return nn::forward_batch(fx.net.trunk, x);
}

struct DisturbanceRecovery {
    Eigen::MatrixXd disturbances;  // n x d
    smica::UnmixingModel model;
};

// Linear unmixing of the trunk features recovers the latent disturbances up
// to permutation, sign and pointwise monotone transforms.
inline DisturbanceRecovery recover_disturbances(const FeatureExtractor& fx,
                                                const SegmentedDataset& data,
                                                smica::SmicaConfig icaCfg = {}) {
    const Eigen::MatrixXd h = hidden_representations(fx, data.x);
    DisturbanceRecovery out;
    out.model = smica::fit(h, data.seg, data.numSegments, icaCfg);
    out.disturbances = out.model.unmix(h);
    return out;
}

} // namespace nonsens::tcl
