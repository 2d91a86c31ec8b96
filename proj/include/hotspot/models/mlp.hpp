#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "hotspot/models/common.hpp"

namespace hotspot {

// Fully connected network with one hidden layer and a linear scalar output.
struct MlpWeights {
    Eigen::MatrixXd w1;  // hidden x inputs
    Eigen::VectorXd b1;  // hidden
    Eigen::VectorXd w2;  // hidden
    double b2 = 0.0;
    Activation activation = Activation::tanh;

    Eigen::Index n_inputs() const noexcept { return w1.cols(); }
    Eigen::Index n_hidden() const noexcept { return w1.rows(); }
    Eigen::Index n_params() const noexcept { return w1.size() + b1.size() + w2.size() + 1; }

    static MlpWeights zeros(Eigen::Index inputs, Eigen::Index hidden) {
        return {Eigen::MatrixXd::Zero(hidden, inputs), Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden),
                0.0};
    }

    // Glorot-uniform hidden layer, small output layer.
    static MlpWeights random(Eigen::Index inputs, Eigen::Index hidden, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        auto w = zeros(inputs, hidden);
        const double a1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
        const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
        std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
        for (Eigen::Index i = 0; i < w.w1.size(); ++i) w.w1.data()[i] = u1(rng);
        for (Eigen::Index i = 0; i < w.w2.size(); ++i) w.w2(i) = u2(rng);
        return w;
    }

    Eigen::VectorXd flatten() const {
        Eigen::VectorXd v(n_params());
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < w1.size(); ++i) v(k++) = w1.data()[i];
        for (Eigen::Index i = 0; i < b1.size(); ++i) v(k++) = b1(i);
        for (Eigen::Index i = 0; i < w2.size(); ++i) v(k++) = w2(i);
        v(k) = b2;
        return v;
    }
    void assign(const Eigen::VectorXd& v) {
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = v(k++);
        for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = v(k++);
        for (Eigen::Index i = 0; i < w2.size(); ++i) w2(i) = v(k++);
        b2 = v(k);
    }
};

struct MlpGradient {
    double loss = 0.0;  // mean squared error
    MlpWeights grad;
};

inline Eigen::MatrixXd mlp_hidden(const MlpWeights& w, const Eigen::MatrixXd& x) {
    if (x.cols() != w.n_inputs()) throw DataError("MLP input width does not match weights");
    Eigen::MatrixXd h = (x * w.w1.transpose()).rowwise() + w.b1.transpose();
    if (w.activation == Activation::tanh) h = h.array().tanh().matrix();
    if (!h.allFinite()) throw NumericError("MLP hidden activations are not finite");
    return h;
}

inline Eigen::VectorXd mlp_forward(const MlpWeights& w, const Eigen::MatrixXd& x) {
    Eigen::VectorXd out = (mlp_hidden(w, x) * w.w2).array() + w.b2;
    if (!out.allFinite()) throw NumericError("MLP output is not finite");
    return out;
}

// Loss L = mean((f(x) - y)^2) and its exact gradient.
inline MlpGradient mlp_backprop(const MlpWeights& w, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() != y.size()) throw DataError("MLP rows and targets differ in length");
    if (x.rows() == 0) throw DataError("MLP needs at least one row");
    const Eigen::MatrixXd h = mlp_hidden(w, x);
    const Eigen::VectorXd pred = (h * w.w2).array() + w.b2;
    if (!pred.allFinite()) throw NumericError("MLP output is not finite");
    const double n = static_cast<double>(x.rows());
    const Eigen::VectorXd resid = pred - y;
    MlpGradient g;
    g.loss = resid.squaredNorm() / n;
    const Eigen::VectorXd d_out = 2.0 * resid / n;
    g.grad.activation = w.activation;
    g.grad.w2 = h.transpose() * d_out;
    g.grad.b2 = d_out.sum();
    Eigen::MatrixXd d_hidden = d_out * w.w2.transpose();  // n x hidden
    if (w.activation == Activation::tanh) d_hidden.array() *= (1.0 - h.array().square());
    g.grad.w1 = d_hidden.transpose() * x;
    g.grad.b1 = d_hidden.colwise().sum().transpose();
    return g;
}

struct MlpOptions {
    int hidden = 10;
    double learning_rate = 0.05;
    int max_epochs = 400;
    int patience = 20;                 // epochs without validation improvement
    double validation_fraction = 0.2;  // trailing rows held out; 0 disables early stopping
    std::uint64_t seed = 1;
};

struct MlpTraining {
    MlpWeights weights;
    int epochs = 0;
    double train_loss = 0.0;
    double validation_loss = std::numeric_limits<double>::quiet_NaN();
};

// Full-batch gradient descent with a fixed step. When a validation split is
// present, returns the weights with the lowest validation loss.
inline MlpTraining train_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpOptions& opt) {
    if (opt.hidden < 1) throw UsageError("MLP needs at least one hidden unit");
    if (!(opt.learning_rate > 0)) throw UsageError("learning rate must be positive");
    const Eigen::Index n = x.rows();
    Eigen::Index n_val = static_cast<Eigen::Index>(std::floor(opt.validation_fraction * static_cast<double>(n)));
    if (opt.validation_fraction > 0 && n_val == 0 && n >= 2) n_val = 1;
    const Eigen::Index n_train = n - n_val;
    if (n_train < 1) throw DataError("MLP has no training rows");
    const Eigen::MatrixXd xt = x.topRows(n_train);
    const Eigen::VectorXd yt = y.head(n_train);

    MlpTraining out;
    out.weights = MlpWeights::random(x.cols(), opt.hidden, opt.seed);
    auto w = out.weights;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
        const auto g = mlp_backprop(w, xt, yt);
        w.w1 -= opt.learning_rate * g.grad.w1;
        w.b1 -= opt.learning_rate * g.grad.b1;
        w.w2 -= opt.learning_rate * g.grad.w2;
        w.b2 -= opt.learning_rate * g.grad.b2;
        out.epochs = epoch;
        if (n_val > 0) {
            const double val = (mlp_forward(w, x.bottomRows(n_val)) - y.tail(n_val)).squaredNorm() / n_val;
            if (val < best_val - 1e-12) {
                best_val = val;
                out.weights = w;
                out.validation_loss = val;
                since_best = 0;
            } else if (++since_best >= opt.patience) {
                break;
            }
        } else {
            out.weights = w;
        }
    }
    out.train_loss = (mlp_forward(out.weights, xt) - yt).squaredNorm() / static_cast<double>(n_train);
    return out;
}

}  // namespace hotspot
