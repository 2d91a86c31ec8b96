#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hotspot/error.hpp"

namespace hotspot {

struct L1Logistic {
    double intercept = 0.0;
    Eigen::VectorXd slopes;
    double lambda = 0.0;
    int iterations = 0;
    double objective = 0.0;
    std::string warning;  // set when the labels are degenerate

    Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const {
        if (x.cols() != slopes.size()) throw DataError("feature width does not match the fitted logistic model");
        return (x * slopes).array() + intercept;
    }
    Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const {
        return linear_predictor(x).unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    }
    int nonzero() const { return static_cast<int>((slopes.array() != 0.0).count()); }
};

struct L1Options {
    int max_outer = 100;
    int max_inner = 1000;
    double tolerance = 1e-9;  // on max coefficient change
};

namespace detail {

inline double log1p_exp(double e) { return e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)); }

inline double l1_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double b0, const Eigen::VectorXd& b,
                           double lambda) {
    const Eigen::VectorXd eta = (x * b).array() + b0;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) loss += log1p_exp(eta(i)) - y(i) * eta(i);
    return loss / static_cast<double>(x.rows()) + lambda * b.lpNorm<1>();
}

inline double soft_threshold(double z, double g) { return z > g ? z - g : (z < -g ? z + g : 0.0); }

inline void check_labels(const Eigen::VectorXd& y) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y(i) != 0.0 && y(i) != 1.0) throw DataError("logistic labels must be 0 or 1");
}

}  // namespace detail

// Minimises (1/n) * sum logistic loss + lambda * ||slopes||_1 with an unpenalised
// intercept. Outer IRLS steps with a backtracking guard; inner weighted
// coordinate descent. `warm` seeds the coefficients.
inline L1Logistic fit_l1_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                                  const L1Options& opt = {}, const L1Logistic* warm = nullptr) {
    if (!(lambda >= 0)) throw UsageError("L1 penalty must be >= 0");
    if (x.rows() != y.size() || x.rows() == 0) throw DataError("logistic fit needs matching, nonempty rows and labels");
    detail::check_labels(y);
    const Eigen::Index n = x.rows(), p = x.cols();
    const double nd = static_cast<double>(n);

    L1Logistic m;
    m.lambda = lambda;
    m.slopes = Eigen::VectorXd::Zero(p);
    const double ybar = y.mean();
    if (ybar == 0.0 || ybar == 1.0) {
        m.intercept = ybar == 0.0 ? -15.0 : 15.0;
        m.warning = "labels are all " + std::string(ybar == 0.0 ? "0" : "1") + "; fitted intercept-only model";
        m.objective = detail::l1_objective(x, y, m.intercept, m.slopes, lambda);
        return m;
    }
    m.intercept = std::log(ybar / (1 - ybar));
    if (warm && warm->slopes.size() == p) {
        m.intercept = warm->intercept;
        m.slopes = warm->slopes;
    }
    double obj = detail::l1_objective(x, y, m.intercept, m.slopes, lambda);

    for (int outer = 1; outer <= opt.max_outer; ++outer) {
        m.iterations = outer;
        const Eigen::VectorXd eta = (x * m.slopes).array() + m.intercept;
        Eigen::VectorXd w(n), z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double pr = 1.0 / (1.0 + std::exp(-eta(i)));
            w(i) = std::max(pr * (1 - pr), 1e-5);
            z(i) = eta(i) + (y(i) - pr) / w(i);
        }
        // Inner problem: (1/2n) sum w (z - b0 - x b)^2 + lambda |b|_1.
        double b0 = m.intercept;
        Eigen::VectorXd b = m.slopes;
        Eigen::VectorXd r = z - ((x * b).array() + b0).matrix();
        Eigen::VectorXd col_scale(p);
        for (Eigen::Index j = 0; j < p; ++j) col_scale(j) = (w.array() * x.col(j).array().square()).sum() / nd;
        const double w_sum = w.sum();
        for (int inner = 0; inner < opt.max_inner; ++inner) {
            double max_delta = 0.0;
            const double d0 = (w.array() * r.array()).sum() / w_sum;
            b0 += d0;
            r.array() -= d0;
            max_delta = std::abs(d0);
            for (Eigen::Index j = 0; j < p; ++j) {
                if (col_scale(j) <= 0) continue;
                const double rho = (w.array() * x.col(j).array() * r.array()).sum() / nd + col_scale(j) * b(j);
                const double nb = detail::soft_threshold(rho, lambda) / col_scale(j);
                const double d = nb - b(j);
                if (d != 0.0) {
                    r -= d * x.col(j);
                    b(j) = nb;
                    max_delta = std::max(max_delta, std::abs(d));
                }
            }
            if (max_delta < opt.tolerance * 0.1) break;
        }
        // Backtrack toward the previous iterate until the objective does not rise.
        double t = 1.0, new_obj = detail::l1_objective(x, y, b0, b, lambda);
        double nb0 = b0;
        Eigen::VectorXd nb = b;
        while (new_obj > obj + 1e-15 && t > 1e-10) {
            t *= 0.5;
            nb0 = m.intercept + t * (b0 - m.intercept);
            nb = m.slopes + t * (b - m.slopes);
            new_obj = detail::l1_objective(x, y, nb0, nb, lambda);
        }
        if (!std::isfinite(new_obj)) throw NumericError("logistic objective became non-finite");
        const double change = std::max(std::abs(nb0 - m.intercept), (nb - m.slopes).cwiseAbs().maxCoeff());
        m.intercept = nb0;
        m.slopes = nb;
        const double decrease = obj - new_obj;
        if (new_obj <= obj) obj = new_obj;
        m.objective = obj;
        // Stationary in the coefficients, or in the objective (slow drift near separation).
        if (change < opt.tolerance || (outer > 1 && decrease >= 0 && decrease < 1e-13 * std::max(1.0, obj)))
            return m;
    }
    throw ConvergenceError("L1 logistic regression", opt.max_outer, m.objective);
}

// Smallest penalty at which every slope is zero.
inline double lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const double ybar = y.mean();
    double best = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        best = std::max(best, std::abs((x.col(j).array() * (y.array() - ybar)).sum()) / static_cast<double>(x.rows()));
    return best;
}

// Log-spaced decreasing grid from lambda_max down to ratio * lambda_max.
inline std::vector<double> lambda_grid(double lmax, int n = 20, double ratio = 1e-3) {
    if (n < 1) throw UsageError("lambda grid needs at least one value");
    std::vector<double> g(n);
    for (int k = 0; k < n; ++k) g[k] = n == 1 ? lmax : lmax * std::pow(ratio, static_cast<double>(k) / (n - 1));
    return g;
}

// Warm-started solutions along a decreasing grid.
inline std::vector<L1Logistic> l1_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       const std::vector<double>& lambdas, const L1Options& opt = {}) {
    std::vector<L1Logistic> path;
    for (double l : lambdas) path.push_back(fit_l1_logistic(x, y, l, opt, path.empty() ? nullptr : &path.back()));
    return path;
}

inline double mean_deviance(const L1Logistic& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Eigen::VectorXd eta = m.linear_predictor(x);
    double d = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) d += 2.0 * (detail::log1p_exp(eta(i)) - y(i) * eta(i));
    return d / static_cast<double>(eta.size());
}

struct L1CrossValidation {
    std::vector<double> lambdas;
    std::vector<double> deviance;  // mean held-out deviance per lambda
    double best_lambda = 0.0;
    L1Logistic model;               // refit on all rows at best_lambda
};

// k-fold cross-validation over the lambda grid by held-out deviance; folds drawn from `seed`.
inline L1CrossValidation cross_validate_l1(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds,
                                           std::uint64_t seed, int grid_size = 20, const L1Options& opt = {}) {
    if (folds < 2) throw UsageError("cross-validation needs at least 2 folds");
    const Eigen::Index n = x.rows();
    if (n < folds) throw DataError("fewer rows than cross-validation folds");
    L1CrossValidation cv;
    cv.lambdas = lambda_grid(lambda_max(x, y), grid_size);
    cv.deviance.assign(cv.lambdas.size(), 0.0);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> tr, te;
        for (Eigen::Index i = 0; i < n; ++i) (i % folds == f ? te : tr).push_back(order[i]);
        const Eigen::MatrixXd xtr = x(tr, Eigen::all), xte = x(te, Eigen::all);
        const Eigen::VectorXd ytr = y(tr), yte = y(te);
        const auto path = l1_path(xtr, ytr, cv.lambdas, opt);
        for (std::size_t k = 0; k < path.size(); ++k)
            cv.deviance[k] += mean_deviance(path[k], xte, yte) / folds;
    }
    const auto best = std::min_element(cv.deviance.begin(), cv.deviance.end()) - cv.deviance.begin();
    cv.best_lambda = cv.lambdas[best];
    const auto full = l1_path(x, y, std::vector<double>(cv.lambdas.begin(), cv.lambdas.begin() + best + 1), opt);
    cv.model = full.back();
    return cv;
}

}  // namespace hotspot
