#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hotspot/inference.hpp"
#include "oracles/normal_equations.hpp"
#include "support/city.hpp"

using namespace hotspot;
using hotspot::testing::block_city;
using hotspot::testing::column_halves;

namespace {

// Random sample over 8 weeks and 4 zone-partitions.
RegressionSample random_sample(std::uint64_t seed, int cells = 40) {
    auto rng = make_engine(seed, 0);
    std::uniform_real_distribution<double> u(0, 1);
    RegressionSample s;
    s.outcome = "P1V";
    for (int w = 0; w < 8; ++w)
        for (int c = 0; c < cells; ++c) {
            SampleRow r;
            r.cell = c;
            r.week = w;
            r.zone = 1 + c % 2;
            r.half = (c / 2) % 2 == 0 ? Half::A : Half::B;
            r.treated = ((w + c / 2) % 2) == 0;
            r.hotspot = u(rng) < 0.2;
            r.type = u(rng) < 0.5 ? HotspotType::chronic : HotspotType::temporary;
            r.adjacent = !r.hotspot && u(rng) < 0.3;
            r.foot = poisson(rng, 5);
            r.car = poisson(rng, 4);
            r.dose = r.foot + r.car / 3.0;
            r.y = poisson(rng, 0.3 + r.hotspot);
            s.rows.push_back(r);
        }
    return s;
}

// Design for variant 1 in dose mode, built independently of the library.
oracle::Matrix variant1_design(const RegressionSample& s) {
    std::set<int> weeks, parts;
    for (auto& r : s.rows) weeks.insert(r.week), parts.insert(r.partition_key());
    oracle::Matrix x;
    for (auto& r : s.rows) {
        std::vector<long double> row{r.hotspot ? 1.0L : 0.0L, r.hotspot && r.treated ? (long double)r.dose : 0.0L, 1.0L};
        for (auto it = std::next(weeks.begin()); it != weeks.end(); ++it) row.push_back(r.week == *it);
        for (auto it = std::next(parts.begin()); it != parts.end(); ++it) row.push_back(r.partition_key() == *it);
        x.push_back(row);
    }
    return x;
}

}  // namespace

TEST(LeastSquares, TwoPointLine) {
    Eigen::MatrixXd x(2, 2);
    x << 1, 0, 1, 1;
    Eigen::VectorXd y(2);
    y << 1, 2;
    const auto ls = least_squares(x, y, {"intercept", "slope"});
    EXPECT_NEAR(ls.beta(0), 1.0, 1e-14);
    EXPECT_NEAR(ls.beta(1), 1.0, 1e-14);
    EXPECT_LT(ls.residuals.norm(), 1e-14);
}

TEST(LeastSquares, RankDeficiencyNamesColumns) {
    Eigen::MatrixXd x(4, 3);
    x << 1, 2, 3, 1, 4, 5, 1, 6, 7, 1, 8, 9;  // third = first + second
    Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
    try {
        least_squares(x, y, {"a", "b", "c"});
        FAIL() << "expected a rank deficiency";
    } catch (const RankDeficiencyError& e) {
        ASSERT_EQ(e.columns().size(), 1u);
        EXPECT_EQ(e.exit_code(), ExitCode::numeric);
    }
}

TEST(Ols, MatchesNormalEquationOracle) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto s = random_sample(seed);
        const auto res = ols_fit(s);
        const auto x = variant1_design(s);
        std::vector<long double> y;
        for (auto& r : s.rows) y.push_back(r.y);
        const auto sol = oracle::normal_equations(x, y);
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(res.coefficients[j].estimate, (double)sol.beta[j], 1e-8 * std::max(1.0, std::fabs((double)sol.beta[j])));
        // Classical and HC1 errors from the same oracle.
        const std::size_t n = x.size(), p = x.front().size();
        std::vector<long double> e(n);
        long double rss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            long double fit = 0;
            for (std::size_t k = 0; k < p; ++k) fit += x[i][k] * sol.beta[k];
            e[i] = y[i] - fit;
            rss += e[i] * e[i];
        }
        EXPECT_EQ(res.df, (int)(n - p));
        for (std::size_t j = 0; j < 3; ++j) {
            const long double se_c = std::sqrt(rss / (n - p) * sol.inverse[j][j]);
            long double meat = 0;
            for (std::size_t i = 0; i < n; ++i) {
                long double zi = 0;
                for (std::size_t k = 0; k < p; ++k) zi += x[i][k] * sol.inverse[k][j];
                meat += zi * zi * e[i] * e[i];
            }
            const long double se_r = std::sqrt(meat * n / (n - p));
            EXPECT_NEAR(res.coefficients[j].se_classical / (double)se_c, 1.0, 1e-8);
            EXPECT_NEAR(res.coefficients[j].se_hc1 / (double)se_r, 1.0, 1e-8);
        }
        EXPECT_EQ(res.coefficients[2].name, "Constant");
        EXPECT_LT(res.coefficients[1].ci_low, res.coefficients[1].estimate);
        EXPECT_GT(res.coefficients[1].ci_high, res.coefficients[1].estimate);
        EXPECT_EQ(res.n, (int)s.rows.size());
    }
}

TEST(Ols, ResidualsOrthogonalToEveryColumn) {
    const auto s = random_sample(9);
    const auto res = ols_fit(s, {.variant = 1});
    const auto x = variant1_design(s);
    for (std::size_t k = 0; k < x.front().size(); ++k) {
        long double dot = 0, scale = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            dot += x[i][k] * res.residuals(static_cast<Eigen::Index>(i));
            scale += std::fabs(x[i][k]);
        }
        EXPECT_LT(std::fabs((double)dot), 1e-8 * std::max(1.0L, scale));
    }
}

TEST(Ols, ShiftedOutcomeMovesOnlyTheLevel) {
    auto s = random_sample(4);
    const auto a = ols_fit(s, {.variant = 2});
    for (auto& r : s.rows) r.y += 5;
    const auto b = ols_fit(s, {.variant = 2});
    for (std::size_t j = 0; j + 1 < a.coefficients.size(); ++j)
        EXPECT_NEAR(a.coefficients[j].estimate, b.coefficients[j].estimate, 1e-10);
    EXPECT_NEAR(b.at("Constant").estimate - a.at("Constant").estimate, 5.0, 1e-10);
    for (auto [w, v] : a.week_effects) EXPECT_NEAR(b.week_effects.at(w), v, 1e-10);
}

TEST(Ols, WithinTransformationMatchesDummies) {
    const auto s = random_sample(5);
    for (int variant : {1, 2, 3, 4}) {
        const auto d = ols_fit(s, {.variant = variant});
        const auto w = ols_fit(s, {.variant = variant, .fe = FeMethod::within});
        ASSERT_EQ(d.coefficients.size(), w.coefficients.size());
        for (std::size_t j = 0; j < d.coefficients.size(); ++j) {
            EXPECT_EQ(d.coefficients[j].name, w.coefficients[j].name);
            EXPECT_NEAR(d.coefficients[j].estimate, w.coefficients[j].estimate, 1e-9);
            if (d.coefficients[j].name == "Constant") continue;
            EXPECT_NEAR(d.coefficients[j].se_classical, w.coefficients[j].se_classical, 1e-9);
            EXPECT_NEAR(d.coefficients[j].se_hc1, w.coefficients[j].se_hc1, 1e-9);
        }
        for (auto [k, v] : d.partition_effects) EXPECT_NEAR(w.partition_effects.at(k), v, 1e-9);
        EXPECT_NEAR(d.adj_r2, w.adj_r2, 1e-12);
    }
}

TEST(Ols, VariantRowsFollowPublishedTables) {
    const auto s = random_sample(6);
    auto names = [&](int v, DoseMode m) {
        std::vector<std::string> out;
        for (auto& c : ols_fit(s, {.variant = v, .mode = m}).coefficients) out.push_back(c.name);
        return out;
    };
    const std::vector<std::string> adj{"Adj. to Hot Spot", "(Adj. to Hot Spot) x Treatment",
                                       "(Not Adj. to Hot Spot) x Treatment", "Constant"};
    auto with_adj = [&](std::vector<std::string> v) {
        v.insert(v.end(), adj.begin(), adj.end());
        return v;
    };
    EXPECT_EQ(names(1, DoseMode::dose), (std::vector<std::string>{"Hot Spot", "Hot Spot x Dose (Combined)", "Constant"}));
    EXPECT_EQ(names(1, DoseMode::indicator), (std::vector<std::string>{"Hot Spot", "Hot Spot x Treatment", "Constant"}));
    EXPECT_EQ(names(2, DoseMode::dose), with_adj({"Hot Spot", "Hot Spot x Dose (Combined)"}));
    EXPECT_EQ(names(3, DoseMode::dose), with_adj({"Chronic Hot Spot", "Chronic Hot Spot x Dose (Combined)",
                                                  "Temp. Hot Spot", "Temp. Hot Spot x Dose (Combined)"}));
    EXPECT_EQ(names(3, DoseMode::indicator), with_adj({"Chronic Hot Spot", "Chronic Hot Spot x Treatment",
                                                       "Temp. Hot Spot", "Temp. Hot Spot x Treatment"}));
    EXPECT_EQ(names(4, DoseMode::dose),
              with_adj({"Chronic Hot Spot", "Chronic Hot Spot x Dose (Car)", "Chronic Hot Spot x Dose (Foot)",
                        "Temp. Hot Spot", "Temp. Hot Spot x Dose (Car)", "Temp. Hot Spot x Dose (Foot)"}));
    EXPECT_THROW(ols_fit(s, {.variant = 4, .mode = DoseMode::indicator}), UsageError);
    EXPECT_THROW(ols_fit(s, {.variant = 5}), UsageError);
}

TEST(Ols, NoHotSpotsIsRankDeficient) {
    auto s = random_sample(7);
    for (auto& r : s.rows) r.hotspot = false;
    try {
        ols_fit(s);
        FAIL();
    } catch (const RankDeficiencyError& e) {
        EXPECT_FALSE(e.columns().empty());
        const auto& c = e.columns();
        EXPECT_TRUE(std::find(c.begin(), c.end(), "Hot Spot") != c.end() ||
                    std::find(c.begin(), c.end(), "Hot Spot x Dose (Combined)") != c.end());
    }
}

TEST(Ols, IndicatorAndDoseAgreeUnderConstantDose) {
    const auto g = block_city(2, 3, 8);
    TrialConfig cfg;
    cfg.weeks = 20;
    cfg.history_weeks = 60;
    cfg.zero_variance = true;
    const auto run = simulate_trial(g, WorldConfig{}, cfg);
    const auto s = build_sample(run.panel, g, run.partitions, run.schedule, run.selections, run.patrols, "P1V");
    for (int v : {1, 2, 3}) {
        const auto d = ols_fit(s, {.variant = v, .mode = DoseMode::dose});
        const auto i = ols_fit(s, {.variant = v, .mode = DoseMode::indicator});
        for (std::size_t j = 0; j < d.coefficients.size(); ++j) {
            EXPECT_NEAR(d.coefficients[j].t, i.coefficients[j].t, 1e-8 * std::max(1.0, std::fabs(i.coefficients[j].t)))
                << d.coefficients[j].name;
            EXPECT_NEAR(d.coefficients[j].p, i.coefficients[j].p, 1e-9);
        }
        const double dose = 12.9 * (0.5 + 0.5 / 3.0);
        EXPECT_NEAR(d.coefficients[1].estimate * dose, i.coefficients[1].estimate, 1e-10);
    }
}

TEST(Sample, ToyCityHandEnumeration) {
    // 5 x 5 single zone; columns 0-2 are half A (treated), 3-4 half B.
    const auto g = block_city(1, 1, 5);
    const auto parts = column_halves(g);
    const AssignmentSchedule sched{0, 1, {1}, {{Half::A}}};
    PanelTensor panel({"P1V"}, 0, 1, g.size());
    for (int c = 0; c < 25; ++c) panel.at(0, c, 0) = c % 3;
    const PatrolLog patrols(0, 1, g.size());

    SelectionSeries sel{{0, 1, 12, HotspotType::chronic, Arm::treatment}};
    auto s = build_sample(panel, g, parts, sched, sel, patrols, "P1V");
    EXPECT_EQ(s.rows.size(), 22u);
    EXPECT_EQ(s.dropped, 3);
    std::set<int> present, adjacent;
    for (auto& r : s.rows) {
        present.insert(r.cell);
        if (r.adjacent) adjacent.insert(r.cell);
        EXPECT_EQ(r.y, r.cell % 3);
        EXPECT_EQ(r.treated, g.cell(r.cell).col <= 2);
    }
    for (int c : {8, 13, 18}) EXPECT_FALSE(present.count(c)) << c;  // diagonal and edge neighbours in half B
    EXPECT_TRUE(present.count(12));
    EXPECT_EQ(adjacent, (std::set<int>{6, 7, 11, 16, 17}));

    // A control hot spot in the corner of half B.
    sel.push_back({0, 1, 4, HotspotType::temporary, Arm::control});
    s = build_sample(panel, g, parts, sched, sel, patrols, "P1V");
    EXPECT_EQ(s.rows.size(), 22u);
    adjacent.clear();
    for (auto& r : s.rows)
        if (r.adjacent) adjacent.insert(r.cell);
    EXPECT_EQ(adjacent, (std::set<int>{3, 6, 7, 9, 11, 16, 17}));

    // A control hot spot next to the treated half contaminates treated cells.
    sel.back().cell = 13;
    s = build_sample(panel, g, parts, sched, sel, patrols, "P1V");
    present.clear();
    for (auto& r : s.rows) present.insert(r.cell);
    EXPECT_TRUE(present.count(13));  // hot spots are never dropped
    for (int c : {7, 17}) EXPECT_FALSE(present.count(c)) << c;
    EXPECT_TRUE(present.count(12));
}

TEST(Sample, MismatchedWeeksAreAnError) {
    const auto g = block_city(1, 1, 5);
    const auto parts = column_halves(g);
    const AssignmentSchedule sched{0, 2, {1}, {{Half::A, Half::B}}};
    PanelTensor panel({"P1V"}, 0, 2, g.size());
    EXPECT_THROW(build_sample(panel, g, parts, sched, {}, PatrolLog(0, 3, g.size()), "P1V"), DataError);
    EXPECT_THROW(build_sample(PanelTensor({"P1V"}, 1, 2, g.size()), g, parts, sched, {}, PatrolLog(0, 2, g.size()), "P1V"),
                 DataError);
    SelectionSeries late{{5, 1, 0, HotspotType::chronic, Arm::treatment}};
    EXPECT_THROW(build_sample(panel, g, parts, sched, late, PatrolLog(0, 2, g.size()), "P1V"), DataError);
}

TEST(DiffTable, PublishedRows) {
    auto row = [](double c, double t) {
        return diff_row("x", std::vector<double>{c}, std::vector<double>{t});
    };
    auto r = row(80, 61);
    EXPECT_EQ(format_percent(r), "-23.8");
    EXPECT_EQ(r.count_difference, -19);
    r = row(15, 10);
    EXPECT_EQ(format_percent(r), "-33.3");
    EXPECT_EQ(r.count_difference, -5);
    r = row(95, 71);
    EXPECT_EQ(format_percent(r), "-25.3");
    r = row(163, 149);
    EXPECT_EQ(format_percent(r), "-8.6");
    r = row(0, 0);
    EXPECT_FALSE(r.change);
    EXPECT_EQ(format_percent(r), "");
    EXPECT_EQ(r.count_difference, 0);
    r = row(8, 9);
    EXPECT_EQ(format_percent(r), "12.5");
}

TEST(DiffTable, StrataFromSample) {
    const auto g = block_city(2, 3, 8);
    TrialConfig cfg;
    cfg.weeks = 10;
    cfg.history_weeks = 60;
    const auto run = simulate_trial(g, WorldConfig{}, cfg);
    const auto s = build_sample(run.panel, g, run.partitions, run.schedule, run.selections, run.patrols, "P1V");
    const auto t = diff_table(s);
    ASSERT_EQ(t.size(), 4u);
    EXPECT_EQ(t[0].control_n, 6 * 6 * 10);
    EXPECT_EQ(t[0].treatment_n, 6 * 6 * 10);
    EXPECT_EQ(t[1].control_n + t[2].control_n, t[0].control_n);
    EXPECT_EQ(t[1].control_sum + t[2].control_sum, t[0].control_sum);
    EXPECT_EQ(t[1].treatment_sum + t[2].treatment_sum, t[0].treatment_sum);
    std::stringstream out;
    write_diff_csv(out, t);
    EXPECT_NE(out.str().find("Temp. Hot Spots"), std::string::npos);
}

TEST(Correlation, DegenerateAndIdentical) {
    EXPECT_NEAR(*pearson({1, 2, 3, 5}, {1, 2, 3, 5}), 1.0, 1e-15);
    EXPECT_FALSE(pearson({1, 1, 1}, {1, 2, 3}));
    EXPECT_FALSE(pearson({1}, {1}));
}

TEST(Correlation, IndependentDoseGivesNullCorrelation) {
    RegressionSample s;
    auto rng = make_engine(3, 0);
    for (int c = 0; c < 400; ++c)
        for (int w = 0; w < 4; ++w) {
            SampleRow r;
            r.cell = c;
            r.week = w;
            r.hotspot = true;
            r.treated = w % 2 == 0;
            r.foot = poisson(rng, 6.45);
            r.car = poisson(rng, 6.45);
            r.dose = r.foot + r.car / 3;
            r.y = poisson(rng, 0.2 + 0.01 * (c % 7));
            s.rows.push_back(r);
        }
    const auto c = dose_outcome_correlation(s);
    EXPECT_EQ(c.cells, 400);
    for (auto v : {c.foot, c.car, c.combined}) {
        ASSERT_TRUE(v);
        EXPECT_LT(std::fabs(*v), 0.1);
    }
}

TEST(Correlation, ConstantDoseIsUndefinedWithWarning) {
    RegressionSample s;
    for (int c = 0; c < 5; ++c)
        for (int w = 0; w < 2; ++w) {
            SampleRow r;
            r.cell = c, r.week = w, r.hotspot = true, r.treated = w == 0;
            r.foot = 3, r.car = c, r.dose = 3 + c / 3.0, r.y = c * c;
            s.rows.push_back(r);
        }
    const auto c = dose_outcome_correlation(s);
    EXPECT_FALSE(c.foot);
    ASSERT_TRUE(c.car);
    EXPECT_EQ(c.warnings.size(), 1u);
}
