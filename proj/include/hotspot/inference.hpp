#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include "json.hpp"

#include "hotspot/csv.hpp"
#include "hotspot/error.hpp"
#include "hotspot/geogrid.hpp"
#include "hotspot/ingest.hpp"
#include "hotspot/trial.hpp"

namespace hotspot {

// ---------------------------------------------------------------------------
// Regression sample
// ---------------------------------------------------------------------------
struct SampleRow {
    int cell = 0;
    int week = 0;
    int zone = 0;
    Half half = Half::A;
    bool treated = false;  // the row's zone-partition is treated this week
    double y = 0.0;
    bool hotspot = false;
    HotspotType type = HotspotType::chronic;  // meaningful only for hot spots
    bool adjacent = false;                    // non-hot-spot cell near a hot spot of its own arm
    double foot = 0.0;
    double car = 0.0;
    double dose = 0.0;

    int partition_key() const noexcept { return 2 * zone + static_cast<int>(half); }
};

inline std::string partition_label(int key) {
    return std::to_string(key / 2) + (key % 2 == 0 ? "A" : "B");
}

struct RegressionSample {
    std::string outcome;
    int first_week = 0;
    int weeks = 0;
    std::vector<SampleRow> rows;
    int dropped = 0;  // contaminated cell-weeks removed
};

// Cell-weeks of the trial with contaminated cells removed: cells of one arm
// within `radius` queen rings of a hot spot of the other arm. Hot spots are
// always kept. Other cells near a hot spot of their own arm are "adjacent".
inline RegressionSample build_sample(const PanelTensor& panel, const GridSpec& grid,
                                     const std::vector<ZonePartition>& partitions,
                                     const AssignmentSchedule& schedule, const SelectionSeries& selections,
                                     const PatrolLog& patrols, const std::string& outcome, int radius = 1) {
    if (radius < 0) throw UsageError("adjacency radius must be >= 0");
    if (patrols.first_week() != schedule.first_week || patrols.weeks() != schedule.weeks)
        throw DataError("patrol log weeks [" + std::to_string(patrols.first_week()) + ", " +
                        std::to_string(patrols.end_week()) + ") do not match the schedule weeks [" +
                        std::to_string(schedule.first_week) + ", " + std::to_string(schedule.end_week()) + ")");
    if (!panel.has_week(schedule.first_week) || !panel.has_week(schedule.end_week() - 1))
        throw DataError("outcome panel does not cover the trial weeks");
    if (patrols.n_cells() != grid.size() || panel.n_cells() != grid.size())
        throw DataError("panel or patrol log does not match the grid");
    for (const auto& h : selections)
        if (!schedule.has_week(h.week))
            throw DataError("selection in week " + std::to_string(h.week) + " lies outside the trial weeks");
    const int var = panel.variable_index(outcome);

    // Half of every masked cell, by linear index.
    std::vector<int> half_of(static_cast<std::size_t>(grid.size()), -1);
    for (const auto& p : partitions)
        for (std::size_t i = 0; i < p.cells.size(); ++i)
            half_of[static_cast<std::size_t>(grid.index(p.cells[i]))] = static_cast<int>(p.half[i]);
    for (int c : grid.masked_cells())
        if (half_of[static_cast<std::size_t>(c)] < 0)
            throw DataError("cell " + std::to_string(c) + " has no zone partition");

    std::map<int, std::vector<const HotspotSelection*>> by_week;
    for (const auto& h : selections) by_week[h.week].push_back(&h);

    RegressionSample s;
    s.outcome = outcome;
    s.first_week = schedule.first_week;
    s.weeks = schedule.weeks;
    const std::size_t n = static_cast<std::size_t>(grid.size());
    std::vector<signed char> hs_arm(n), near_treat(n), near_control(n);
    std::vector<HotspotType> hs_type(n);
    for (int w = schedule.first_week; w < schedule.end_week(); ++w) {
        std::fill(hs_arm.begin(), hs_arm.end(), -1);
        std::fill(near_treat.begin(), near_treat.end(), 0);
        std::fill(near_control.begin(), near_control.end(), 0);
        for (const auto* h : by_week[w]) {
            if (h->cell < 0 || h->cell >= grid.size() || !grid.in_mask(h->cell))
                throw DataError("selected cell " + std::to_string(h->cell) + " is outside the city");
            const auto cell = static_cast<std::size_t>(h->cell);
            const bool treated = schedule.treated(grid.zone(h->cell), static_cast<Half>(half_of[cell]), w);
            if (treated != (h->arm == Arm::treatment))
                throw DataError("selection arm for cell " + std::to_string(h->cell) + " week " + std::to_string(w) +
                                " disagrees with the schedule");
            hs_arm[cell] = static_cast<signed char>(h->arm);
            hs_type[cell] = h->type;
            const CellId id = grid.cell(h->cell);
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc) {
                    const CellId nb{id.row + dr, id.col + dc};
                    if (!grid.in_mask(nb)) continue;
                    (h->arm == Arm::treatment ? near_treat : near_control)[static_cast<std::size_t>(grid.index(nb))] = 1;
                }
        }
        for (int c : grid.masked_cells()) {
            const auto cu = static_cast<std::size_t>(c);
            SampleRow r;
            r.cell = c;
            r.week = w;
            r.zone = grid.zone(c);
            r.half = static_cast<Half>(half_of[cu]);
            r.treated = schedule.treated(r.zone, r.half, w);
            r.y = panel.at(var, c, w);
            r.foot = patrols.foot(c, w);
            r.car = patrols.car(c, w);
            r.dose = patrols.dose(c, w);
            if (hs_arm[cu] >= 0) {
                r.hotspot = true;
                r.type = hs_type[cu];
            } else {
                const bool contaminated = r.treated ? near_control[cu] : near_treat[cu];
                if (contaminated) {
                    ++s.dropped;
                    continue;
                }
                r.adjacent = r.treated ? near_treat[cu] : near_control[cu];
            }
            s.rows.push_back(r);
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// OLS with two-way fixed effects
// ---------------------------------------------------------------------------
struct LeastSquares {
    Eigen::VectorXd beta;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd xtx_inverse;
};

// Column-pivoted QR solve; a rank-deficient design names the dropped columns.
inline LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const std::vector<std::string>& names) {
    if (x.rows() != y.size()) throw DataError("design rows do not match the outcome length");
    if (static_cast<Eigen::Index>(names.size()) != x.cols()) throw UsageError("one name per design column is required");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols()) {
        std::vector<std::string> collinear;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < x.cols(); ++j) collinear.push_back(names[static_cast<std::size_t>(perm(j))]);
        throw RankDeficiencyError(collinear);
    }
    LeastSquares out;
    out.beta = qr.solve(y);
    if (!out.beta.allFinite()) throw NumericError("least-squares coefficients are not finite");
    out.residuals = y - x * out.beta;
    // (X'X)^-1 = P R^-1 R^-T P'.
    const Eigen::Index p = x.cols();
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv = r.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    out.xtx_inverse = qr.colsPermutation() * (rinv * rinv.transpose()) * qr.colsPermutation().transpose();
    return out;
}

enum class DoseMode { dose, indicator };
enum class SeType { classical, hc1 };
enum class FeMethod { dummies, within };

inline std::string to_string(DoseMode m) { return m == DoseMode::dose ? "dose" : "indicator"; }
inline std::string to_string(SeType s) { return s == SeType::classical ? "classical" : "hc1"; }

struct OlsOptions {
    int variant = 1;  // 1-4; 4 splits dose into car and foot and has no indicator form
    DoseMode mode = DoseMode::dose;
    SeType se = SeType::classical;
    FeMethod fe = FeMethod::dummies;
    double level = 0.95;
};

struct Coefficient {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;  // of the selected type
    double t = 0.0;
    double p = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double se_classical = 0.0;
    double se_hc1 = 0.0;
};

struct RegressionResult {
    int variant = 1;
    DoseMode mode = DoseMode::dose;
    SeType se_type = SeType::classical;
    std::string outcome;
    std::vector<Coefficient> coefficients;  // named regressors, then Constant
    std::map<int, double> week_effects;     // first week is the reference (0)
    std::map<int, double> partition_effects;  // by partition key; first key is the reference (0)
    Eigen::VectorXd residuals;
    double r2 = 0.0;
    double adj_r2 = 0.0;
    int n = 0;
    int df = 0;  // residual degrees of freedom

    const Coefficient& at(const std::string& name) const {
        for (const auto& c : coefficients)
            if (c.name == name) return c;
        throw UsageError("regression has no coefficient '" + name + "'");
    }
};

namespace detail {

struct NamedColumn {
    std::string name;
    Eigen::VectorXd values;
};

// Regressors per variant, named after the published table rows.
inline std::vector<NamedColumn> design_columns(const RegressionSample& s, int variant, DoseMode mode) {
    if (variant < 1 || variant > 4) throw UsageError("regression variant must be 1, 2, 3 or 4");
    if (variant == 4 && mode == DoseMode::indicator)
        throw UsageError("variant 4 splits dose by patrol type and has no indicator form");
    const auto n = static_cast<Eigen::Index>(s.rows.size());
    std::vector<NamedColumn> cols;
    auto add = [&](std::string name, auto f) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = f(s.rows[static_cast<std::size_t>(i)]);
        cols.push_back({std::move(name), std::move(v)});
    };
    const bool dose = mode == DoseMode::dose;
    const std::string inter = dose ? " x Dose (Combined)" : " x Treatment";
    auto treat = [&](const SampleRow& r) { return r.treated ? (dose ? r.dose : 1.0) : 0.0; };
    if (variant <= 2) {
        add("Hot Spot", [](const SampleRow& r) { return r.hotspot ? 1.0 : 0.0; });
        add("Hot Spot" + inter, [&](const SampleRow& r) { return r.hotspot ? treat(r) : 0.0; });
    } else {
        for (auto [type, label] : {std::pair{HotspotType::chronic, std::string("Chronic Hot Spot")},
                                   std::pair{HotspotType::temporary, std::string("Temp. Hot Spot")}}) {
            auto is = [type = type](const SampleRow& r) { return r.hotspot && r.type == type; };
            add(label, [&](const SampleRow& r) { return is(r) ? 1.0 : 0.0; });
            if (variant == 3) {
                add(label + inter, [&](const SampleRow& r) { return is(r) ? treat(r) : 0.0; });
            } else {
                add(label + " x Dose (Car)", [&](const SampleRow& r) { return is(r) && r.treated ? r.car : 0.0; });
                add(label + " x Dose (Foot)", [&](const SampleRow& r) { return is(r) && r.treated ? r.foot : 0.0; });
            }
        }
    }
    if (variant >= 2) {
        add("Adj. to Hot Spot", [](const SampleRow& r) { return r.adjacent ? 1.0 : 0.0; });
        add("(Adj. to Hot Spot) x Treatment", [](const SampleRow& r) { return r.adjacent && r.treated ? 1.0 : 0.0; });
        add("(Not Adj. to Hot Spot) x Treatment",
            [](const SampleRow& r) { return !r.hotspot && !r.adjacent && r.treated ? 1.0 : 0.0; });
    }
    return cols;
}

struct FeLevels {
    std::vector<int> weeks, partitions;          // sorted distinct levels
    std::vector<int> week_of_row, part_of_row;   // level position per row
};

inline FeLevels fe_levels(const RegressionSample& s) {
    FeLevels f;
    for (const auto& r : s.rows) {
        f.weeks.push_back(r.week);
        f.partitions.push_back(r.partition_key());
    }
    for (auto* v : {&f.weeks, &f.partitions}) {
        std::sort(v->begin(), v->end());
        v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    for (const auto& r : s.rows) {
        f.week_of_row.push_back(
            static_cast<int>(std::lower_bound(f.weeks.begin(), f.weeks.end(), r.week) - f.weeks.begin()));
        f.part_of_row.push_back(static_cast<int>(
            std::lower_bound(f.partitions.begin(), f.partitions.end(), r.partition_key()) - f.partitions.begin()));
    }
    return f;
}

// Removes week and partition means by alternating projections.
inline void demean_two_way(Eigen::MatrixXd& m, const FeLevels& f) {
    const auto n = m.rows();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        auto col = m.col(j);
        const double scale = std::max(1.0, col.cwiseAbs().maxCoeff());
        for (int it = 0;; ++it) {
            if (it == 10000) throw ConvergenceError("two-way demeaning", it, col.cwiseAbs().maxCoeff());
            double change = 0.0;
            for (int pass = 0; pass < 2; ++pass) {
                const auto& key = pass == 0 ? f.week_of_row : f.part_of_row;
                const std::size_t levels = pass == 0 ? f.weeks.size() : f.partitions.size();
                std::vector<double> sum(levels, 0.0), cnt(levels, 0.0);
                for (Eigen::Index i = 0; i < n; ++i) sum[key[i]] += col(i), cnt[key[i]] += 1;
                for (std::size_t l = 0; l < levels; ++l) {
                    sum[l] /= cnt[l];
                    change = std::max(change, std::abs(sum[l]));
                }
                for (Eigen::Index i = 0; i < n; ++i) col(i) -= sum[key[i]];
            }
            if (change < 1e-13 * scale) break;
        }
    }
}

}  // namespace detail

// Least squares of the outcome on the variant's regressors plus week and
// zone-partition fixed effects. Classical and HC1 errors are both computed;
// `opt.se` picks the one used for t, p and the interval.
inline RegressionResult ols_fit(const RegressionSample& s, const OlsOptions& opt = {}) {
    if (!(opt.level > 0 && opt.level < 1)) throw UsageError("confidence level must lie in (0, 1)");
    const auto named = detail::design_columns(s, opt.variant, opt.mode);
    const auto n = static_cast<Eigen::Index>(s.rows.size());
    const auto f = detail::fe_levels(s);
    const Eigen::Index k = static_cast<Eigen::Index>(named.size());
    const Eigen::Index n_fe = static_cast<Eigen::Index>(f.weeks.size() + f.partitions.size()) - 2;
    const Eigen::Index p_total = k + 1 + n_fe;
    if (n <= p_total) throw DataError("regression sample has " + std::to_string(n) + " rows for " +
                                      std::to_string(p_total) + " parameters");
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = s.rows[static_cast<std::size_t>(i)].y;

    RegressionResult res;
    res.variant = opt.variant;
    res.mode = opt.mode;
    res.se_type = opt.se;
    res.outcome = s.outcome;
    res.n = static_cast<int>(n);
    res.df = static_cast<int>(n - p_total);

    // Columns whose coefficients are reported with errors come first.
    std::vector<std::string> names;
    for (const auto& c : named) names.push_back(c.name);
    Eigen::MatrixXd x;
    Eigen::VectorXd target = y;
    if (opt.fe == FeMethod::dummies) {
        x.setZero(n, p_total);
        for (Eigen::Index j = 0; j < k; ++j) x.col(j) = named[static_cast<std::size_t>(j)].values;
        x.col(k).setOnes();
        names.push_back("Constant");
        for (std::size_t w = 1; w < f.weeks.size(); ++w) names.push_back("week " + std::to_string(f.weeks[w]));
        for (std::size_t p = 1; p < f.partitions.size(); ++p) names.push_back("partition " + partition_label(f.partitions[p]));
        for (Eigen::Index i = 0; i < n; ++i) {
            const int wl = f.week_of_row[static_cast<std::size_t>(i)], pl = f.part_of_row[static_cast<std::size_t>(i)];
            if (wl > 0) x(i, k + wl) = 1.0;
            if (pl > 0) x(i, k + static_cast<Eigen::Index>(f.weeks.size()) - 1 + pl) = 1.0;
        }
    } else {
        x.resize(n, k);
        for (Eigen::Index j = 0; j < k; ++j) x.col(j) = named[static_cast<std::size_t>(j)].values;
        Eigen::MatrixXd yy = y;
        detail::demean_two_way(x, f);
        detail::demean_two_way(yy, f);
        target = yy.col(0);
    }

    const auto ls = least_squares(x, target, names);
    const Eigen::VectorXd& beta = ls.beta;
    const Eigen::VectorXd& resid = ls.residuals;
    const Eigen::MatrixXd& bread = ls.xtx_inverse;

    const double rss = resid.squaredNorm();
    const double sigma2 = rss / static_cast<double>(res.df);
    const Eigen::Index reported = opt.fe == FeMethod::dummies ? k + 1 : k;
    // Sandwich restricted to the reported coefficients.
    const Eigen::MatrixXd z = x * bread.leftCols(reported);
    const Eigen::MatrixXd meat = z.transpose() * (z.array().colwise() * resid.array().square()).matrix();
    const double hc1 = static_cast<double>(n) / static_cast<double>(res.df);

    const boost::math::students_t dist(static_cast<double>(res.df));
    const double crit = boost::math::quantile(boost::math::complement(dist, (1.0 - opt.level) / 2.0));
    auto make = [&](const std::string& name, double est, double se_c, double se_r) {
        Coefficient c{name, est, opt.se == SeType::classical ? se_c : se_r, 0, 1, est, est, se_c, se_r};
        if (c.se > 0 && std::isfinite(c.se)) {
            c.t = est / c.se;
            c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(c.t)));
            c.ci_low = est - crit * c.se;
            c.ci_high = est + crit * c.se;
        } else {
            c.t = std::numeric_limits<double>::quiet_NaN();
            c.p = std::numeric_limits<double>::quiet_NaN();
            c.ci_low = c.ci_high = std::numeric_limits<double>::quiet_NaN();
        }
        return c;
    };
    for (Eigen::Index j = 0; j < reported; ++j)
        res.coefficients.push_back(make(names[static_cast<std::size_t>(j)], beta(j), std::sqrt(sigma2 * bread(j, j)),
                                        std::sqrt(hc1 * meat(j, j))));

    if (opt.fe == FeMethod::dummies) {
        res.week_effects[f.weeks[0]] = 0.0;
        res.partition_effects[f.partitions[0]] = 0.0;
        for (std::size_t w = 1; w < f.weeks.size(); ++w)
            res.week_effects[f.weeks[w]] = beta(k + static_cast<Eigen::Index>(w));
        for (std::size_t p = 1; p < f.partitions.size(); ++p)
            res.partition_effects[f.partitions[p]] = beta(k + static_cast<Eigen::Index>(f.weeks.size() - 1 + p));
        res.residuals = resid;
    } else {
        // Recover the fixed effects from y - X b by alternating group means.
        Eigen::MatrixXd xb(n, k);
        for (Eigen::Index j = 0; j < k; ++j) xb.col(j) = named[static_cast<std::size_t>(j)].values;
        const Eigen::VectorXd rest = y - xb * beta;
        std::vector<double> a(f.partitions.size(), 0.0), d(f.weeks.size(), 0.0);
        for (int it = 0;; ++it) {
            if (it == 10000) throw ConvergenceError("fixed-effect recovery", it, 0.0);
            double change = 0.0;
            for (int pass = 0; pass < 2; ++pass) {
                auto& eff = pass == 0 ? d : a;
                const auto& own = pass == 0 ? f.week_of_row : f.part_of_row;
                const auto& oth = pass == 0 ? f.part_of_row : f.week_of_row;
                const auto& other_eff = pass == 0 ? a : d;
                std::vector<double> sum(eff.size(), 0.0), cnt(eff.size(), 0.0);
                for (Eigen::Index i = 0; i < n; ++i) {
                    sum[static_cast<std::size_t>(own[static_cast<std::size_t>(i)])] +=
                        rest(i) - other_eff[static_cast<std::size_t>(oth[static_cast<std::size_t>(i)])];
                    cnt[static_cast<std::size_t>(own[static_cast<std::size_t>(i)])] += 1;
                }
                for (std::size_t l = 0; l < eff.size(); ++l) {
                    const double v = sum[l] / cnt[l];
                    change = std::max(change, std::abs(v - eff[l]));
                    eff[l] = v;
                }
            }
            if (change < 1e-13 * std::max(1.0, rest.cwiseAbs().maxCoeff())) break;
        }
        const double constant = a[0] + d[0];
        for (std::size_t w = 0; w < f.weeks.size(); ++w) res.week_effects[f.weeks[w]] = d[w] - d[0];
        for (std::size_t p = 0; p < f.partitions.size(); ++p) res.partition_effects[f.partitions[p]] = a[p] - a[0];
        res.coefficients.push_back(make("Constant", constant, std::numeric_limits<double>::quiet_NaN(),
                                        std::numeric_limits<double>::quiet_NaN()));
        res.residuals = resid;
    }

    const double tss = (y.array() - y.mean()).square().sum();
    res.r2 = tss > 0 ? 1.0 - rss / tss : 0.0;
    res.adj_r2 = tss > 0 ? 1.0 - (rss / res.df) / (tss / static_cast<double>(n - 1)) : 0.0;
    return res;
}

inline nlohmann::json to_json(const RegressionResult& r) {
    nlohmann::json coefs = nlohmann::json::array();
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    for (const auto& c : r.coefficients)
        coefs.push_back({{"name", c.name},
                         {"estimate", c.estimate},
                         {"se", num(c.se)},
                         {"t", num(c.t)},
                         {"p", num(c.p)},
                         {"ci_low", num(c.ci_low)},
                         {"ci_high", num(c.ci_high)},
                         {"se_classical", num(c.se_classical)},
                         {"se_hc1", num(c.se_hc1)}});
    nlohmann::json weeks = nlohmann::json::object(), parts = nlohmann::json::object();
    for (auto [w, v] : r.week_effects) weeks[std::to_string(w)] = v;
    for (auto [p, v] : r.partition_effects) parts[partition_label(p)] = v;
    return {{"model", r.variant},
            {"mode", to_string(r.mode)},
            {"se_type", to_string(r.se_type)},
            {"outcome", r.outcome},
            {"coefficients", coefs},
            {"week_fe", weeks},
            {"zone_partition_fe", parts},
            {"adj_r2", r.adj_r2},
            {"r2", r.r2},
            {"n", r.n},
            {"df", r.df}};
}

// ---------------------------------------------------------------------------
// Difference tables
// ---------------------------------------------------------------------------
struct DiffRow {
    std::string stratum;
    double control_sum = 0.0;
    double control_sd = 0.0;
    int control_n = 0;
    double treatment_sum = 0.0;
    double treatment_sd = 0.0;
    int treatment_n = 0;
    std::optional<double> change;  // (treatment - control) / control; empty when control is 0
    double count_difference = 0.0;
};

namespace detail {

inline double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

inline DiffRow diff_row(std::string stratum, const std::vector<double>& control, const std::vector<double>& treatment) {
    DiffRow r;
    r.stratum = std::move(stratum);
    for (double x : control) r.control_sum += x;
    for (double x : treatment) r.treatment_sum += x;
    r.control_n = static_cast<int>(control.size());
    r.treatment_n = static_cast<int>(treatment.size());
    r.control_sd = detail::sample_sd(control);
    r.treatment_sd = detail::sample_sd(treatment);
    r.count_difference = r.treatment_sum - r.control_sum;
    if (r.control_sum != 0) r.change = r.count_difference / r.control_sum;
    return r;
}

// Percent with one decimal, rounded half away from zero. Integer sums are
// rounded exactly so that e.g. -19/80 prints as -23.8.
inline std::string format_percent(const DiffRow& r) {
    if (!r.change) return "";
    long long tenths;
    const double c = r.control_sum, d = r.count_difference;
    if (c == std::floor(c) && d == std::floor(d) && std::abs(c) < 1e15 && std::abs(d) < 1e12) {
        const long long num = 1000LL * static_cast<long long>(d), den = static_cast<long long>(c);
        const long long an = num < 0 ? -num : num, ad = den < 0 ? -den : den;
        const long long q = (2 * an + ad) / (2 * ad);
        tenths = (num < 0) != (den < 0) ? -q : q;
    } else {
        tenths = std::llround(*r.change * 1000.0);
    }
    const long long a = tenths < 0 ? -tenths : tenths;
    return (tenths < 0 ? "-" : "") + std::to_string(a / 10) + "." + std::to_string(a % 10);
}

// Control vs treatment sums for all, chronic and temporary hot spots and for adjacent cells.
inline std::vector<DiffRow> diff_table(const RegressionSample& s) {
    std::vector<double> v[4][2];
    for (const auto& r : s.rows) {
        const int arm = r.treated ? 1 : 0;
        if (r.hotspot) {
            v[0][arm].push_back(r.y);
            v[r.type == HotspotType::chronic ? 1 : 2][arm].push_back(r.y);
        } else if (r.adjacent) {
            v[3][arm].push_back(r.y);
        }
    }
    const char* names[4] = {"All Hot Spots", "Chronic Hot Spots", "Temp. Hot Spots", "Adjacent Cells"};
    std::vector<DiffRow> out;
    for (int k = 0; k < 4; ++k) {
        if (v[k][0].empty() || v[k][1].empty())
            throw DataError(std::string("difference stratum '") + names[k] + "' has no cell-weeks in one arm");
        out.push_back(diff_row(names[k], v[k][0], v[k][1]));
    }
    return out;
}

inline void write_diff_csv(std::ostream& out, const std::vector<DiffRow>& rows) {
    out << "stratum,control_sum,control_sd,control_n,treatment_sum,treatment_sd,treatment_n,pct_change,count_difference\n";
    for (const auto& r : rows)
        out << r.stratum << ',' << csv::format(r.control_sum) << ',' << csv::format(r.control_sd) << ',' << r.control_n
            << ',' << csv::format(r.treatment_sum) << ',' << csv::format(r.treatment_sd) << ',' << r.treatment_n << ','
            << format_percent(r) << ',' << csv::format(r.count_difference) << '\n';
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------
inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw UsageError("correlation needs vectors of equal length");
    const double n = static_cast<double>(a.size());
    if (a.size() < 2) return std::nullopt;
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n, mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

struct DoseOutcomeCorrelation {
    int cells = 0;
    std::optional<double> foot, car, combined;
    std::vector<std::string> warnings;
};

// Across cells that were hot spots in both arms: mean patrols when treated
// against mean outcome when control.
inline DoseOutcomeCorrelation dose_outcome_correlation(const RegressionSample& s) {
    struct Acc {
        double foot = 0, car = 0, dose = 0, nt = 0, y = 0, nc = 0;
    };
    std::map<int, Acc> acc;
    for (const auto& r : s.rows) {
        if (!r.hotspot) continue;
        auto& a = acc[r.cell];
        if (r.treated) {
            a.foot += r.foot, a.car += r.car, a.dose += r.dose, a.nt += 1;
        } else {
            a.y += r.y, a.nc += 1;
        }
    }
    std::vector<double> foot, car, dose, y;
    for (auto& [cell, a] : acc) {
        if (a.nt == 0 || a.nc == 0) continue;
        foot.push_back(a.foot / a.nt);
        car.push_back(a.car / a.nt);
        dose.push_back(a.dose / a.nt);
        y.push_back(a.y / a.nc);
    }
    DoseOutcomeCorrelation out;
    out.cells = static_cast<int>(y.size());
    if (out.cells < 2) throw DataError("correlation needs at least 2 cells that were hot spots in both arms");
    out.foot = pearson(foot, y);
    out.car = pearson(car, y);
    out.combined = pearson(dose, y);
    for (auto [name, v] : {std::pair{"foot", &out.foot}, std::pair{"car", &out.car}, std::pair{"combined", &out.combined}})
        if (!*v) out.warnings.push_back(std::string(name) + " correlation undefined: zero variance");
    return out;
}

inline nlohmann::json to_json(const DoseOutcomeCorrelation& c) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"cells", c.cells},
            {"foot", opt(c.foot)},
            {"car", opt(c.car)},
            {"combined", opt(c.combined)},
            {"warnings", c.warnings}};
}

// Events by victim group in control and treatment hot spots.
struct VictimCounts {
    double control = 0;
    double treatment = 0;
};

inline std::map<std::string, VictimCounts> victim_group_counts(const std::vector<EventRecord>& events,
                                                               const RegressionSample& s, const GridSpec& grid,
                                                               const IndicatorDictionary& dict) {
    std::map<std::pair<int, int>, bool> hotspot_arm;
    for (const auto& r : s.rows)
        if (r.hotspot) hotspot_arm[{r.cell, r.week}] = r.treated;
    std::map<std::string, VictimCounts> out;
    for (const auto& e : events) {
        if (!e.victim_group || e.domestic || !dict.is_p1v(e.category)) continue;
        CellId c;
        try {
            c = cell_of({e.x, e.y}, grid);
        } catch (const OutOfMaskError&) {
            continue;
        }
        auto it = hotspot_arm.find({grid.index(c), week_of(e.timestamp)});
        if (it == hotspot_arm.end()) continue;
        (it->second ? out[*e.victim_group].treatment : out[*e.victim_group].control) += 1;
    }
    return out;
}

}  // namespace hotspot
