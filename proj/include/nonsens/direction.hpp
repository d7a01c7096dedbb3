#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "common.hpp"
#include "neuralnet.hpp"
#include "smica.hpp"
#include "stats.hpp"

namespace nonsens::direction {

constexpr double kDerivFloor = 1e-12;
constexpr double kPermTieTol = 1e-9;

// Estimated map from observations to disturbances: N(x) = W (t(x) - mean)
// where t is the trained trunk (or the identity for linear models).
struct DisturbanceMap {
    nn::Mlp trunk;
    bool hasTrunk = false;
    Eigen::MatrixXd w;       // d x trunkOut
    Eigen::VectorXd mean;    // trunkOut

    Eigen::MatrixXd eval(const Eigen::MatrixXd& x) const {
        const Eigen::MatrixXd t = hasTrunk ? nn::forward_batch(trunk, x) : x;
        return (t.rowwise() - mean.transpose()) * w.transpose();
    }

    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
        if (!hasTrunk) return w;
        return w * nn::input_jacobian(trunk, x);
    }
};

inline DisturbanceMap make_map(const nn::Mlp& trunk, const smica::UnmixingModel& model) {
    DisturbanceMap g;
    g.trunk = trunk;
    g.hasTrunk = true;
    g.w = model.effectiveW();
    g.mean = model.mean;
    return g;
}

inline DisturbanceMap make_map(const smica::UnmixingModel& model) {
    DisturbanceMap g;
    g.hasTrunk = false;
    g.w = model.effectiveW();
    g.mean = model.mean;
    return g;
}

inline DisturbanceMap make_map(const smica::LinearIcaModel& model) {
    DisturbanceMap g;
    g.hasTrunk = false;
    g.w = model.effectiveW();
    g.mean = model.mean;
    return g;
}

struct JacTerm {
    double value = 0.0;
    double flooredFraction = 0.0;
    bool degenerate = false;  // more than 10% of rows hit the derivative floor
};

// E[ log |d g_out / d x_in| ] over the sample, with |derivative| floored at
// 1e-12 before the log.
inline JacTerm jacobian_expectation(const DisturbanceMap& g, const Eigen::MatrixXd& x, int out,
                                    int in) {
    if (x.rows() < 1) throw std::invalid_argument("jacobian_expectation: empty data");
    if (out < 0 || in < 0 || in >= x.cols()) throw std::invalid_argument("jacobian_expectation: bad index");
    double acc = 0.0;
    Eigen::Index floored = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Eigen::MatrixXd j = g.jacobian(x.row(i).transpose());
        double a = std::abs(j(out, in));
        if (a < kDerivFloor) {
            a = kDerivFloor;
            ++floored;
        }
        acc += std::log(a);
    }
    JacTerm t;
    t.value = acc / static_cast<double>(x.rows());
    t.flooredFraction = static_cast<double>(floored) / static_cast<double>(x.rows());
    t.degenerate = t.flooredFraction > 0.10;
    return t;
}

struct PermChoice {
    std::array<int, 2> perm{0, 1};  // perm[0] pairs with X1, perm[1] with X2
    bool tie = false;
    // raw expectation terms, [disturbance][observation]
    std::array<std::array<JacTerm, 2>, 2> terms;
};

// Chooses which disturbance goes with which observed variable by maximising
// E log|d g_{pi(2)} / d x_2| + E log|d g_{pi(1)} / d x_1|; ties fall back to
// the identity assignment. Adding a constant to every term cannot change the
// argmax since both candidate sums shift equally.
inline PermChoice select_permutation(const DisturbanceMap& g, const Eigen::MatrixXd& x) {
    if (x.cols() != 2) throw std::invalid_argument("select_permutation: bivariate data expected");
    PermChoice c;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) c.terms[a][b] = jacobian_expectation(g, x, a, b);
    const double identity = c.terms[0][0].value + c.terms[1][1].value;
    const double swapped = c.terms[1][0].value + c.terms[0][1].value;
    if (swapped > identity + kPermTieTol) {
        c.perm = {1, 0};
    } else {
        c.perm = {0, 1};
        c.tie = std::abs(swapped - identity) <= kPermTieTol;
    }
    return c;
}

struct DirectionScore {
    double r = 0.0;
    Decision decision = Decision::Inconclusive;
    std::array<int, 2> perm{0, 1};
    bool permTie = false;
    bool tie = false;         // r was exactly zero
    bool degenerate = false;  // a jacobian term hit the floor on >10% of rows
    // components: r = -entropyX[0] - entropyN[1] + jacTerm[1]
    //                 + entropyX[1] + entropyN[0] - jacTerm[0]
    std::array<double, 2> entropyX{0.0, 0.0};  // standardized X1, X2
    std::array<double, 2> entropyN{0.0, 0.0};  // standardized N_{perm[0]}, N_{perm[1]}
    std::array<double, 2> jacTerm{0.0, 0.0};   // scale-corrected E log|dg/dx|
};

// Likelihood-ratio style direction measure. All four variables are
// standardized internally and the jacobian terms absorb the corresponding
// scale corrections, so the value is invariant to affine rescaling of the
// inputs and reassembles exactly from the stored components.
inline DirectionScore likelihood_ratio(const DisturbanceMap& g, const Eigen::MatrixXd& x,
                                       int entropyK = 3) {
    if (x.cols() != 2) throw std::invalid_argument("likelihood_ratio: bivariate data expected");
    if (x.rows() < entropyK + 2) throw std::invalid_argument("likelihood_ratio: too few samples");

    DirectionScore s;
    const PermChoice pc = select_permutation(g, x);
    s.perm = pc.perm;
    s.permTie = pc.tie;

    const Eigen::MatrixXd n = g.eval(x);
    const auto sx1 = stats::standardize(x.col(0));
    const auto sx2 = stats::standardize(x.col(1));
    const auto sn1 = stats::standardize(n.col(pc.perm[0]));
    const auto sn2 = stats::standardize(n.col(pc.perm[1]));

    s.entropyX[0] = stats::knn_entropy(sx1.values, entropyK);
    s.entropyX[1] = stats::knn_entropy(sx2.values, entropyK);
    s.entropyN[0] = stats::knn_entropy(sn1.values, entropyK);
    s.entropyN[1] = stats::knn_entropy(sn2.values, entropyK);

    const JacTerm j1 = pc.terms[static_cast<std::size_t>(pc.perm[0])][0];
    const JacTerm j2 = pc.terms[static_cast<std::size_t>(pc.perm[1])][1];
    s.degenerate = j1.degenerate || j2.degenerate;
    s.jacTerm[0] = j1.value + std::log(sx1.stdev) - std::log(sn1.stdev);
    s.jacTerm[1] = j2.value + std::log(sx2.stdev) - std::log(sn2.stdev);

    s.r = -s.entropyX[0] - s.entropyN[1] + s.jacTerm[1] + s.entropyX[1] + s.entropyN[0] -
          s.jacTerm[0];
    if (s.r > 0.0) {
        s.decision = Decision::X1Causes;
    } else {
        s.decision = Decision::X2Causes;
        s.tie = s.r == 0.0;
    }
    return s;
}

struct MiIdentity {
    double lhs = 0.0;  // the likelihood-ratio value
    double rhs = 0.0;  // -I(X1, N_{pi(2)}) + I(X2, N_{pi(1)})
    double gap = 0.0;
};

// The ratio equals a difference of mutual informations; estimating both sides
// independently gives a consistency check on the estimators.
inline MiIdentity check_mi_identity(const DisturbanceMap& g, const Eigen::MatrixXd& x,
                                    int k = 3) {
    MiIdentity out;
    const DirectionScore s = likelihood_ratio(g, x, k);
    out.lhs = s.r;
    const Eigen::MatrixXd n = g.eval(x);
    const auto sx1 = stats::standardize(x.col(0));
    const auto sx2 = stats::standardize(x.col(1));
    const auto sn1 = stats::standardize(n.col(s.perm[0]));
    const auto sn2 = stats::standardize(n.col(s.perm[1]));
    out.rhs = -stats::mutual_information(sx1.values, sn2.values, k) +
              stats::mutual_information(sx2.values, sn1.values, k);
    out.gap = out.lhs - out.rhs;
    return out;
}

inline void to_json(nlohmann::json& j, const DirectionScore& s) {
    j = nlohmann::json{{"decision", decision_name(s.decision)},
                       {"r", s.r},
                       {"permutation", s.perm},
                       {"perm_tie", s.permTie},
                       {"tie", s.tie},
                       {"degenerate", s.degenerate},
                       {"entropy_x", s.entropyX},
                       {"entropy_n", s.entropyN},
                       {"jac_terms", s.jacTerm}};
}

} // namespace nonsens::direction
