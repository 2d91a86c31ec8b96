#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "hotspot/error.hpp"

namespace hotspot {

// type 0 = target event (modelled); type k >= 1 = covariate event that can
// trigger target events but is not itself modelled.
struct SeppEvent {
    double t = 0.0;  // weeks
    double x = 0.0;
    double y = 0.0;
    int type = 0;
};

struct SeppOptions {
    double background_bandwidth = 500.0;  // feet, fixed
    double initial_omega = 1.0;            // per week
    double initial_sigma = 500.0;          // feet
    double sigma_floor = 0.0;
    double initial_theta = 0.2;
    double tolerance = 1e-4;  // on max change in assignment probability
    int max_iterations = 500;
};

struct SeppModel {
    std::vector<SeppEvent> targets;
    std::vector<SeppEvent> parents;    // all events that can trigger (targets and covariates)
    std::vector<double> background_weight;  // p_ii per target event
    std::vector<double> theta;         // expected offspring per parent, by type
    double omega = 1.0;
    double sigma = 1.0;
    double bandwidth = 1.0;
    double horizon = 0.0;  // T: window length in weeks, starting at 0
    int iterations = 0;

    double branching_ratio() const { return theta.empty() ? 0.0 : theta[0]; }

    double background(double x, double y) const {
        const double h2 = bandwidth * bandwidth;
        double s = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const double dx = x - targets[i].x, dy = y - targets[i].y;
            s += background_weight[i] * std::exp(-(dx * dx + dy * dy) / (2 * h2));
        }
        return s / (2 * std::numbers::pi * h2 * horizon);
    }

    // Conditional intensity at (t, x, y) from events strictly before t.
    double intensity(double t, double x, double y) const {
        double lam = background(x, y);
        const double s2 = sigma * sigma;
        for (const auto& p : parents) {
            if (p.t >= t) continue;
            const double dx = x - p.x, dy = y - p.y;
            lam += theta[p.type] * omega * std::exp(-omega * (t - p.t)) *
                   std::exp(-(dx * dx + dy * dy) / (2 * s2)) / (2 * std::numbers::pi * s2);
        }
        return lam;
    }

    // Integral of the intensity over [0, T] and the whole plane.
    double expected_count() const {
        double s = 0.0;
        for (double w : background_weight) s += w;
        for (const auto& p : parents) s += theta[p.type] * (1 - std::exp(-omega * (horizon - p.t)));
        return s;
    }
};

// Expectation-maximisation for a self-exciting point process: background by
// leave-one-out weighted kernel density, triggering exponential in time and
// Gaussian in space. Events must have t in [0, horizon].
inline SeppModel fit_sepp(std::vector<SeppEvent> events, double horizon, int n_types, const SeppOptions& opt = {}) {
    if (!(horizon > 0)) throw UsageError("SEPP window length must be positive");
    if (n_types < 1) throw UsageError("SEPP needs at least the target type");
    if (!(opt.background_bandwidth > 0) || !(opt.initial_sigma > 0) || !(opt.initial_omega > 0))
        throw UsageError("SEPP bandwidths and decay must be positive");
    std::stable_sort(events.begin(), events.end(), [](const SeppEvent& a, const SeppEvent& b) { return a.t < b.t; });
    SeppModel m;
    m.horizon = horizon;
    m.bandwidth = opt.background_bandwidth;
    m.omega = opt.initial_omega;
    m.sigma = std::max(opt.initial_sigma, opt.sigma_floor);
    m.theta.assign(n_types, opt.initial_theta);
    for (const auto& e : events) {
        if (e.type < 0 || e.type >= n_types) throw DataError("SEPP event type out of range");
        if (e.t < 0 || e.t > horizon) throw DataError("SEPP event time outside the window");
        m.parents.push_back(e);
        if (e.type == 0) m.targets.push_back(e);
    }
    const std::size_t n = m.targets.size(), np = m.parents.size();
    m.background_weight.assign(n, 1.0);
    if (n == 0) return m;

    // Candidate parents for each target: indices into parents with t_j < t_i.
    std::vector<std::vector<std::size_t>> cand(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < np; ++j)
            if (m.parents[j].t < m.targets[i].t) cand[i].push_back(j);
    std::vector<std::vector<double>> prob(n);
    for (std::size_t i = 0; i < n; ++i) prob[i].assign(cand[i].size(), 0.0);

    const double h2 = m.bandwidth * m.bandwidth;
    double last_change = 0.0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        m.iterations = it;
        double max_change = 0.0;
        // E-step.
        const double s2 = m.sigma * m.sigma;
        std::vector<double> new_bg(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& ei = m.targets[i];
            if (cand[i].empty()) {
                max_change = std::max(max_change, std::abs(1.0 - m.background_weight[i]));
                new_bg[i] = 1.0;
                continue;
            }
            double bg = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == i) continue;
                const double dx = ei.x - m.targets[k].x, dy = ei.y - m.targets[k].y;
                const double d2 = dx * dx + dy * dy;
                if (d2 < 64 * h2) bg += m.background_weight[k] * std::exp(-d2 / (2 * h2));
            }
            bg /= 2 * std::numbers::pi * h2 * horizon;
            std::vector<double> trig(cand[i].size());
            double total = bg;
            for (std::size_t c = 0; c < cand[i].size(); ++c) {
                const auto& p = m.parents[cand[i][c]];
                const double dx = ei.x - p.x, dy = ei.y - p.y;
                const double d2 = dx * dx + dy * dy;
                if (d2 > 64 * s2 || m.omega * (ei.t - p.t) > 40) {
                    trig[c] = 0.0;
                    continue;
                }
                trig[c] = m.theta[p.type] * m.omega * std::exp(-m.omega * (ei.t - p.t)) *
                          std::exp(-(dx * dx + dy * dy) / (2 * s2)) / (2 * std::numbers::pi * s2);
                total += trig[c];
            }
            if (!(total > 0) || !std::isfinite(total)) {
                total = 1.0;
                bg = 1.0;
                std::fill(trig.begin(), trig.end(), 0.0);
            }
            new_bg[i] = bg / total;
            max_change = std::max(max_change, std::abs(new_bg[i] - m.background_weight[i]));
            for (std::size_t c = 0; c < trig.size(); ++c) {
                const double p = trig[c] / total;
                max_change = std::max(max_change, std::abs(p - prob[i][c]));
                prob[i][c] = p;
            }
        }
        m.background_weight = new_bg;
        last_change = max_change;

        // M-step.
        std::vector<double> offspring(n_types, 0.0), exposure(n_types, 0.0);
        double sum_p = 0.0, sum_pdt = 0.0, sum_pd2 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < cand[i].size(); ++c) {
                const double p = prob[i][c];
                if (p == 0.0) continue;
                const auto& par = m.parents[cand[i][c]];
                const double dx = m.targets[i].x - par.x, dy = m.targets[i].y - par.y;
                offspring[par.type] += p;
                sum_p += p;
                sum_pdt += p * (m.targets[i].t - par.t);
                sum_pd2 += p * (dx * dx + dy * dy);
            }
        if (sum_p > 1e-12) {
            m.omega = sum_p / std::max(sum_pdt, 1e-12);
            m.sigma = std::max(std::sqrt(sum_pd2 / (2 * sum_p)), std::max(opt.sigma_floor, 1e-9));
        }
        for (const auto& par : m.parents) exposure[par.type] += 1 - std::exp(-m.omega * (horizon - par.t));
        for (int k = 0; k < n_types; ++k) m.theta[k] = exposure[k] > 0 ? offspring[k] / exposure[k] : 0.0;
        for (double th : m.theta)
            if (!std::isfinite(th)) throw NumericError("SEPP triggering estimate is not finite");
        if (it > 1 && max_change < opt.tolerance) return m;
    }
    throw ConvergenceError("SEPP expectation-maximisation", opt.max_iterations, last_change);
}

}  // namespace hotspot
