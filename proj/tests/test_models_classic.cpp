#include <gtest/gtest.h>

#include <random>

#include "hotspot/models/kde.hpp"
#include "hotspot/models/l1_logistic.hpp"
#include "hotspot/models/scan.hpp"
#include "oracles/logistic.hpp"

using namespace hotspot;

TEST(L1Logistic, HugePenaltyZeroesEverySlope) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 1);
    Eigen::MatrixXd x(200, 5);
    Eigen::VectorXd y(200);
    for (int i = 0; i < 200; ++i) {
        for (int j = 0; j < 5; ++j) x(i, j) = n(rng);
        y(i) = x(i, 0) + n(rng) > 0 ? 1 : 0;
    }
    const auto m = fit_l1_logistic(x, y, 1e6);
    EXPECT_EQ(m.nonzero(), 0);
    for (int j = 0; j < 5; ++j) EXPECT_EQ(m.slopes(j), 0.0);
    EXPECT_EQ(fit_l1_logistic(x, y, lambda_max(x, y) * 1.0001).nonzero(), 0);
}

TEST(L1Logistic, UnpenalisedFitMatchesGradientDescentOracle) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0, 1);
    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    Eigen::MatrixXd x(300, 1);
    Eigen::VectorXd y(300);
    for (int i = 0; i < 300; ++i) {
        x(i, 0) = n(rng);
        y(i) = 1.5 * x(i, 0) - 0.3 + n(rng) > 0 ? 1 : 0;
        rows.push_back({x(i, 0)});
        labels.push_back(y(i));
    }
    const auto m = fit_l1_logistic(x, y, 0.0);
    const auto ref = oracle::logistic_gradient_descent(rows, labels);
    EXPECT_NEAR(m.intercept, ref[0], 1e-4);
    EXPECT_NEAR(m.slopes(0), ref[1], 1e-4);
}

TEST(L1Logistic, CrossValidatedFitRecoversPlantedSupport) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0, 1);
    const int rows = 2000, cols = 50;
    Eigen::MatrixXd x(rows, cols);
    Eigen::VectorXd y(rows);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) x(i, j) = n(rng);
        const double eta = 1.2 * x(i, 3) - 1.0 * x(i, 17) + 0.8 * x(i, 41);
        y(i) = u(rng) < 1 / (1 + std::exp(-eta)) ? 1 : 0;
    }
    const auto cv = cross_validate_l1(x, y, 5, 9, 15);
    for (int j : {3, 17, 41}) EXPECT_NE(cv.model.slopes(j), 0.0) << j;
}

TEST(L1Logistic, NonzeroCountIsMonotoneAlongThePath) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0, 1);
    Eigen::MatrixXd x(400, 20);
    Eigen::VectorXd y(400);
    for (int i = 0; i < 400; ++i) {
        for (int j = 0; j < 20; ++j) x(i, j) = n(rng);
        y(i) = x(i, 0) - 0.5 * x(i, 1) + 0.25 * x(i, 2) + n(rng) > 0 ? 1 : 0;
    }
    const auto path = l1_path(x, y, lambda_grid(lambda_max(x, y), 25, 0.05));
    for (std::size_t k = 1; k < path.size(); ++k) EXPECT_GE(path[k].nonzero(), path[k - 1].nonzero()) << k;
}

TEST(L1Logistic, DegenerateLabelsGiveClampedInterceptOnlyModel) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 3);
    const auto m = fit_l1_logistic(x, Eigen::VectorXd::Zero(10), 0.1);
    EXPECT_FALSE(m.warning.empty());
    EXPECT_EQ(m.nonzero(), 0);
    EXPECT_LE(std::abs(m.intercept), 15.0);
    EXPECT_THROW(fit_l1_logistic(x, Eigen::VectorXd::Constant(10, 2.0), 0.1), DataError);
    EXPECT_THROW(fit_l1_logistic(x, Eigen::VectorXd::Zero(10), -1.0), UsageError);
}

TEST(Kde, SingleEventPeaksAtItsCellAndDecaysSymmetrically) {
    const auto g = GridSpec::uniform(9, 9);
    const Point p = g.center({4, 4});
    const auto s = kde_surface({{p.x, p.y, 1.0}}, 600.0, g);
    const auto argmax = std::max_element(s.begin(), s.end()) - s.begin();
    EXPECT_EQ(g.masked_cells()[argmax], g.index({4, 4}));
    EXPECT_DOUBLE_EQ(s[g.index({4, 2})], s[g.index({4, 6})]);
    EXPECT_DOUBLE_EQ(s[g.index({2, 4})], s[g.index({4, 2})]);
    EXPECT_GT(s[g.index({4, 3})], s[g.index({4, 2})]);
}

TEST(Kde, TwoDistantEqualEventsScoreEqually) {
    const auto g = GridSpec::uniform(10, 30);
    const Point a = g.center({5, 3}), b = g.center({5, 25});
    const auto s = kde_surface({{a.x, a.y, 1.0}, {b.x, b.y, 1.0}}, 500.0, g);
    EXPECT_NEAR(s[g.index({5, 3})], s[g.index({5, 25})], 1e-15);
}

TEST(Kde, MassMatchesEventCountOnPaddedGrid) {
    const auto g = GridSpec::uniform(60, 60);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(10000.0, 20000.0);  // well inside the 30000 ft grid
    std::vector<WeightedPoint> pts;
    for (int i = 0; i < 50; ++i) pts.push_back({u(rng), u(rng), 1.0});
    const auto s = kde_surface(pts, 800.0, g);
    double mass = 0;
    for (double v : s) mass += v * g.cell_area();
    EXPECT_NEAR(mass, 50.0, 0.02 * 50.0);
}

TEST(Kde, NoEventsGiveZeroSurfaceAndBadBandwidthIsRejected) {
    const auto g = GridSpec::uniform(3, 3);
    for (double v : kde_surface({}, 100.0, g)) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(kde_surface({}, 0.0, g), UsageError);
}

namespace {

PanelTensor noise_panel(const GridSpec& g, int weeks, double rate, std::uint64_t seed) {
    PanelTensor p({"a"}, 0, weeks, g.size());
    auto rng = make_engine(seed, streams::crime);
    for (int c : g.masked_cells())
        for (int w = 0; w < weeks; ++w) p.at(0, c, w) = poisson(rng, rate);
    return p;
}

double iou(const SpaceTimeCluster& c, int r0, int c0, int r1, int c1, int dur) {
    const int ir = std::max(0, std::min(c.row1, r1) - std::max(c.row0, r0) + 1);
    const int ic = std::max(0, std::min(c.col1, c1) - std::max(c.col0, c0) + 1);
    const int it = std::min(c.duration, dur);
    const double inter = static_cast<double>(ir) * ic * it;
    const double va = static_cast<double>(c.row1 - c.row0 + 1) * (c.col1 - c.col0 + 1) * c.duration;
    const double vb = static_cast<double>(r1 - r0 + 1) * (c1 - c0 + 1) * dur;
    return inter / (va + vb - inter);
}

}  // namespace

TEST(Scan, PlantedBlockIsRecoveredAndSignificant) {
    const auto g = GridSpec::uniform(16, 16);
    const int weeks = 70, as_of = 70;
    auto p = noise_panel(g, weeks, 0.5, 11);
    auto rng = make_engine(12, streams::crime);
    for (int r = 6; r <= 8; ++r)
        for (int c = 9; c <= 11; ++c)
            for (int w = as_of - 4; w < as_of; ++w) p.at(0, g.index({r, c}), w) = poisson(rng, 2.5);
    const auto clusters = scan_clusters(p, g, "a", as_of);
    ASSERT_FALSE(clusters.empty());
    EXPECT_GE(iou(clusters[0], 6, 9, 8, 11, 4), 0.5);
    for (std::size_t i = 0; i < clusters.size(); ++i)
        for (std::size_t j = i + 1; j < clusters.size(); ++j) EXPECT_FALSE(clusters[i].overlaps(clusters[j]));
    const auto sig = scan_monte_carlo(p, g, "a", as_of, 99, 5);
    EXPECT_LE(sig.p_value, 0.05);
}

TEST(Scan, AllZeroPanelHasNoClusters) {
    const auto g = GridSpec::uniform(8, 8);
    PanelTensor p({"a"}, 0, 70, g.size());
    EXPECT_TRUE(scan_clusters(p, g, "a", 70).empty());
}

TEST(Scan, HomogeneousNoiseStaysBelowNullPercentile) {
    const auto g = GridSpec::uniform(12, 12);
    const auto p = noise_panel(g, 70, 0.5, 21);
    auto sig = scan_monte_carlo(p, g, "a", 70, 99, 6);
    std::sort(sig.null_scores.begin(), sig.null_scores.end());
    EXPECT_LT(sig.observed_score, sig.null_scores[94]);
}

TEST(Scan, ScoreFormula) {
    EXPECT_DOUBLE_EQ(poisson_scan_score(3, 5), 0.0);
    EXPECT_NEAR(poisson_scan_score(10, 4), 10 * std::log(2.5) - 6, 1e-12);
}
