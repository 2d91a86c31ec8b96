#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "hotspot/error.hpp"
#include "hotspot/features.hpp"

namespace hotspot {

// One forecast score per in-city cell; `cells` mirrors GridSpec::masked_cells().
struct ScoreGrid {
    int week = 0;
    std::vector<int> cells;
    std::vector<double> scores;

    bool operator==(const ScoreGrid&) const = default;
};

enum class Activation { tanh, identity };

inline double activate(Activation a, double x) noexcept { return a == Activation::tanh ? std::tanh(x) : x; }
// Derivative expressed through the activated value.
inline double activate_grad(Activation a, double activated) noexcept {
    return a == Activation::tanh ? 1.0 - activated * activated : 1.0;
}

inline Eigen::MatrixXd to_eigen(const FeatureMatrix& m) {
    Eigen::MatrixXd out(m.n_rows(), m.n_cols());
    for (std::size_t r = 0; r < m.n_rows(); ++r)
        for (std::size_t c = 0; c < m.n_cols(); ++c) out(r, c) = m(r, c);
    return out;
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Per-column standardisation fitted on training rows only. Constant columns get unit scale.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& x) {
        Standardizer s;
        const auto n = static_cast<double>(x.rows());
        s.mean = x.colwise().mean();
        s.scale.resize(x.cols());
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double var = n > 1 ? (x.col(c).array() - s.mean(c)).square().sum() / (n - 1) : 0.0;
            s.scale(c) = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
        return s;
    }
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        if (x.cols() != mean.size()) throw DataError("feature width does not match the fitted standardiser");
        return (x.rowwise() - mean).array().rowwise() / scale.array();
    }
};

}  // namespace hotspot
