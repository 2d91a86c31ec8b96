#include <gtest/gtest.h>

#include <random>

#include "hotspot/models/gp.hpp"
#include "hotspot/models/sepp.hpp"
#include "support/hawkes.hpp"

using namespace hotspot;
using hotspot::testing::simulate_hawkes;

TEST(Gp, NoiselessFitInterpolatesTrainingRows) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 5000);
    std::normal_distribution<double> n(0, 1);
    GpData d;
    d.coords.resize(30, 3);
    d.covariates.resize(30, 1);
    d.target.resize(30);
    for (int i = 0; i < 30; ++i) {
        d.coords.row(i) << u(rng), u(rng), i % 10;
        d.covariates(i, 0) = n(rng);
        d.target(i) = 2 + d.covariates(i, 0) + n(rng);
    }
    GpOptions opt;
    opt.signal_fraction = 1.0;
    opt.length_space = 800;
    opt.length_time = 2;
    const auto m = fit_gp(d, opt);
    const auto pred = m.predict(d.coords, d.covariates);
    for (int i = 0; i < 30; ++i) EXPECT_NEAR(pred(i), d.target(i), 1e-6);
}

TEST(Gp, FarFromDataPredictionFallsBackToLinearMean) {
    GpData d;
    d.coords = Eigen::MatrixXd::Zero(4, 3);
    for (int i = 0; i < 4; ++i) d.coords(i, 0) = 100.0 * i;
    d.covariates.resize(4, 1);
    d.covariates << 0, 1, 2, 3;
    d.target.resize(4);
    d.target << 1, 3, 5, 7.5;
    const auto m = fit_gp(d, {});
    Eigen::MatrixXd far(1, 3);
    far << 1e7, 1e7, 0;
    Eigen::MatrixXd z(1, 1);
    z << 10;
    EXPECT_NEAR(m.predict(far, z)(0), m.mean_coef(0) + 10 * m.mean_coef(1), 1e-12);
}

TEST(Gp, SubsampleCapIsHonouredAndDeterministic) {
    GpData d;
    const int n = 300;
    d.coords = Eigen::MatrixXd::Random(n, 3) * 1000;
    d.covariates.resize(n, 0);
    d.target = Eigen::VectorXd::Random(n);
    GpOptions opt;
    opt.max_rows = 50;
    const auto a = fit_gp(d, opt), b = fit_gp(d, opt);
    EXPECT_EQ(a.coords.rows(), 50);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_THROW(fit_gp(d, GpOptions{.length_space = 0}), UsageError);
}


TEST(Sepp, SingleEventIsAllBackground) {
    const auto m = fit_sepp({{1.0, 10.0, 20.0, 0}}, 5.0, 1);
    EXPECT_EQ(m.branching_ratio(), 0.0);
    ASSERT_EQ(m.background_weight.size(), 1u);
    EXPECT_EQ(m.background_weight[0], 1.0);
}

TEST(Sepp, PoissonDataHasSmallBranchingRatio) {
    const auto h = simulate_hawkes(10.0, 0.0, 1.0, 200.0, 100.0, 10000.0, 3);
    const auto m = fit_sepp(h.events, h.horizon, 1);
    EXPECT_LT(m.branching_ratio(), 0.1);
}

TEST(Sepp, RecoversPlantedBranchingRatio) {
    const auto h = simulate_hawkes(10.0, 0.5, 1.0, 200.0, 100.0, 10000.0, 4);
    ASSERT_GT(h.events.size(), 1500u);
    ASSERT_LT(h.events.size(), 2500u);
    const auto m = fit_sepp(h.events, h.horizon, 1);
    EXPECT_NEAR(m.branching_ratio(), 0.5, 0.1);
    EXPECT_NEAR(m.omega, 1.0, 0.3);
    EXPECT_NEAR(m.expected_count(), static_cast<double>(h.events.size()), 0.05 * h.events.size());
}

TEST(Sepp, CovariateParentsGetTheirOwnTriggeringWeight) {
    auto h = simulate_hawkes(5.0, 0.0, 1.0, 200.0, 60.0, 8000.0, 5);
    // Covariate events each trigger one target event nearby shortly after.
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> ut(0, 55), us(0, 8000);
    std::normal_distribution<double> disp(0, 150);
    std::exponential_distribution<double> delay(2.0);
    for (int i = 0; i < 150; ++i) {
        const SeppEvent c{ut(rng), us(rng), us(rng), 1};
        h.events.push_back(c);
        const double t = c.t + delay(rng);
        if (t <= 60) h.events.push_back({t, c.x + disp(rng), c.y + disp(rng), 0});
    }
    const auto m = fit_sepp(h.events, 60.0, 2);
    EXPECT_GT(m.theta[1], 0.6);
    EXPECT_LT(m.theta[0], 0.15);
}

TEST(Sepp, IterationCapRaisesConvergenceError) {
    const auto h = simulate_hawkes(10.0, 0.5, 1.0, 200.0, 20.0, 5000.0, 7);
    SeppOptions opt;
    opt.max_iterations = 2;
    EXPECT_THROW(fit_sepp(h.events, h.horizon, 1, opt), ConvergenceError);
}
