#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hotspot/error.hpp"

namespace hotspot {

struct GpOptions {
    double length_space = 1000.0;  // feet
    double length_time = 4.0;      // weeks
    double signal_fraction = 0.5;  // share of residual variance given to the kernel; the rest is noise
    double jitter = 1e-8;
    int max_rows = 2000;
    std::uint64_t seed = 1;
};

// Rows are (x, y, t) coordinates plus linear-mean covariates.
struct GpData {
    Eigen::MatrixXd coords;  // n x 3: x, y, week
    Eigen::MatrixXd covariates;  // n x p (may have zero columns)
    Eigen::VectorXd target;
};

struct GpModel {
    GpOptions options;
    Eigen::VectorXd mean_coef;  // intercept first
    Eigen::MatrixXd coords;
    Eigen::VectorXd alpha;
    double signal_variance = 0.0;
    double noise_variance = 0.0;

    double kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
        const double ds = (a(0) - b(0)) * (a(0) - b(0)) + (a(1) - b(1)) * (a(1) - b(1));
        const double dt = (a(2) - b(2)) * (a(2) - b(2));
        return signal_variance * std::exp(-0.5 * ds / (options.length_space * options.length_space) -
                                          0.5 * dt / (options.length_time * options.length_time));
    }

    Eigen::VectorXd predict(const Eigen::MatrixXd& coords_new, const Eigen::MatrixXd& covariates_new) const {
        if (coords_new.cols() != 3 || covariates_new.cols() + 1 != mean_coef.size() ||
            coords_new.rows() != covariates_new.rows())
            throw DataError("GP prediction inputs do not match the fitted model");
        Eigen::VectorXd out(coords_new.rows());
        for (Eigen::Index i = 0; i < coords_new.rows(); ++i) {
            double m = mean_coef(0) + covariates_new.row(i).dot(mean_coef.tail(mean_coef.size() - 1));
            for (Eigen::Index j = 0; j < coords.rows(); ++j) m += kernel(coords_new.row(i), coords.row(j)) * alpha(j);
            if (!std::isfinite(m)) throw NumericError("GP prediction is not finite");
            out(i) = m;
        }
        return out;
    }
};

// Linear mean by least squares, then exact GP regression on the residuals of
// a seeded subsample capped at options.max_rows.
inline GpModel fit_gp(const GpData& data, const GpOptions& opt) {
    const Eigen::Index n = data.target.size();
    if (n == 0 || data.coords.rows() != n || data.covariates.rows() != n || data.coords.cols() != 3)
        throw DataError("GP training data has inconsistent shapes");
    if (!(opt.length_space > 0) || !(opt.length_time > 0)) throw UsageError("GP length-scales must be positive");
    if (opt.signal_fraction < 0 || opt.signal_fraction > 1) throw UsageError("GP signal fraction must be in [0, 1]");
    if (opt.max_rows < 1) throw UsageError("GP row cap must be positive");
    GpModel m;
    m.options = opt;
    Eigen::MatrixXd design(n, data.covariates.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(data.covariates.cols()) = data.covariates;
    m.mean_coef = design.colPivHouseholderQr().solve(data.target);
    const Eigen::VectorXd resid = data.target - design * m.mean_coef;

    std::vector<Eigen::Index> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    if (n > opt.max_rows) {
        std::mt19937_64 rng(opt.seed);
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(opt.max_rows);
        std::sort(rows.begin(), rows.end());
    }
    const auto k = static_cast<Eigen::Index>(rows.size());
    m.coords = data.coords(rows, Eigen::all);
    const Eigen::VectorXd r = resid(rows);
    const double var = k > 1 ? (r.array() - r.mean()).square().sum() / static_cast<double>(k - 1) : 0.0;
    m.signal_variance = var > 0 ? opt.signal_fraction * var : 1.0;
    m.noise_variance = var > 0 ? (1 - opt.signal_fraction) * var : 0.0;

    Eigen::MatrixXd gram(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) gram(i, j) = gram(j, i) = m.kernel(m.coords.row(i), m.coords.row(j));
    gram.diagonal().array() += m.noise_variance + opt.jitter * m.signal_variance;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericError("GP covariance matrix is not positive definite");
    m.alpha = llt.solve(r);
    if (!m.alpha.allFinite()) throw NumericError("GP solve produced non-finite weights");
    return m;
}

}  // namespace hotspot
