#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "hotspot/models/zoo.hpp"
#include "hotspot/rng.hpp"

using namespace hotspot;

namespace {

PanelTensor random_panel(const GridSpec& g, int weeks, std::uint64_t seed) {
    PanelTensor p({"P1V", "P1P"}, 0, weeks, g.size());
    auto rng = make_engine(seed, streams::crime);
    for (int c : g.masked_cells()) {
        const double base = 0.05 + 0.6 * ((c * 7) % 5 == 0);
        for (int w = 0; w < weeks; ++w) {
            p.at(0, c, w) = poisson(rng, base);
            p.at(1, c, w) = poisson(rng, 2 * base);
        }
    }
    return p;
}

// Small, quick settings for every kind.
ModelSpec quick(ModelKind k) {
    auto s = ModelSpec::of(k);
    s.indicators = {"P1P"};
    s.mlp.max_epochs = 15;
    s.mlp_lags = 8;
    s.cnn.max_epochs = 5;
    s.cnn.channels = 3;
    s.gp.max_rows = 150;
    s.cv_folds = 3;
    s.sepp.max_iterations = 2000;
    s.target_weeks = 20;
    if (k == ModelKind::lasso_cc) s.target_weeks = 8;
    return s;
}

}  // namespace

TEST(Zoo, MavgStoresNoParametersAndSumsTheWindow) {
    const auto g = GridSpec::uniform(3, 3);
    PanelTensor p({"P1V"}, 0, 120, g.size());
    for (int w = 0; w < 120; ++w) p.at(0, 4, w) = 1;
    const auto m = fit(ModelSpec::of(ModelKind::mavg), p, g, 110);
    EXPECT_TRUE(std::holds_alternative<std::monostate>(m.params));
    EXPECT_EQ(m.fit_week, 110);
    const auto s = score(m, p, g, 110);
    EXPECT_EQ(s.scores[4], 52.0);
    EXPECT_EQ(s.scores[0], 0.0);
}

TEST(Zoo, KdeSingleEventPeaksAtItsCell) {
    const auto g = GridSpec::uniform(7, 7);
    PanelTensor p({"P1V"}, 0, 110, g.size());
    p.at(0, g.index({2, 5}), 100) = 1;
    const auto s = score(fit(ModelSpec::of(ModelKind::kde), p, g, 105), p, g, 105);
    const auto it = std::max_element(s.scores.begin(), s.scores.end());
    EXPECT_EQ(s.cells[it - s.scores.begin()], g.index({2, 5}));
    EXPECT_EQ(std::count(s.scores.begin(), s.scores.end(), *it), 1);
}

TEST(Zoo, LassoWithHugePenaltyHasNoSlopes) {
    const auto g = GridSpec::uniform(5, 5);
    const auto p = random_panel(g, 130, 3);
    auto spec = quick(ModelKind::lasso_lc);
    spec.lambda = 1e9;
    const auto m = fit(spec, p, g, 120);
    EXPECT_EQ(std::get<L1Fit>(m.params).model.nonzero(), 0);
}

TEST(Zoo, EveryKindIsDeterministicAndFreeOfLookAhead) {
    const auto g = GridSpec::uniform(6, 6);
    const auto p = random_panel(g, 130, 5);
    const int w = 118;
    for (const auto& [kind, name] : model_kind_names) {
        SCOPED_TRACE(std::string(name));
        const auto spec = quick(kind);
        const auto m = fit(spec, p, g, w);
        const auto a = score(m, p, g, w);
        ASSERT_EQ(a.scores.size(), static_cast<std::size_t>(g.n_masked()));
        EXPECT_EQ(a, score(fit(spec, p, g, w), p, g, w));

        auto future = p;
        for (int c = 0; c < g.size(); ++c)
            for (int v = 0; v < 2; ++v)
                for (int t = w; t < p.end_week(); ++t) future.at(v, c, t) = 7 + (c + t) % 3;
        EXPECT_EQ(a, score(fit(spec, future, g, w), future, g, w));
    }
}

TEST(Zoo, MavgAndKdeRankingsSurviveScaling) {
    const auto g = GridSpec::uniform(6, 6);
    const auto p = random_panel(g, 120, 8);
    auto scaled = p;
    for (int c = 0; c < g.size(); ++c)
        for (int t = 0; t < 120; ++t) scaled.at(0, c, t) *= 3;
    for (auto kind : {ModelKind::mavg, ModelKind::kde}) {
        const auto spec = ModelSpec::of(kind);
        const auto a = score(fit(spec, p, g, 110), p, g, 110).scores;
        const auto b = score(fit(spec, scaled, g, 110), scaled, g, 110).scores;
        auto order = [](const std::vector<double>& v) {
            std::vector<int> idx(v.size());
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) { return v[i] > v[j]; });
            return idx;
        };
        EXPECT_EQ(order(a), order(b));
    }
}

TEST(Zoo, TrainingWindowMustFitInsideThePanel) {
    const auto g = GridSpec::uniform(3, 3);
    PanelTensor p({"P1V"}, 0, 100, g.size());
    try {
        fit(ModelSpec::of(ModelKind::mavg), p, g, 50);
        FAIL();
    } catch (const InsufficientHistoryError& e) {
        EXPECT_EQ(e.earliest_feasible_week(), 104);
    }
}

TEST(ModelSpec, JsonRoundTripAndValidation) {
    auto s = quick(ModelKind::mlp_nh);
    s.lambda = 0.25;
    s.seed = 99;
    const nlohmann::json j = s;
    const auto back = j.get<ModelSpec>();
    EXPECT_EQ(nlohmann::json(back), j);

    EXPECT_THROW((nlohmann::json{{"kind", "NOPE"}}.get<ModelSpec>()), UsageError);
    EXPECT_THROW((nlohmann::json{{"kind", "KDE"}, {"bandwidth", -1}}.get<ModelSpec>()), UsageError);
    EXPECT_THROW((nlohmann::json{{"kind", "MLP-LC"}, {"hidden", 0}}.get<ModelSpec>()), UsageError);
    EXPECT_THROW((nlohmann::json{{"kind", "LASSO-LC"}, {"lambda", -0.5}}.get<ModelSpec>()), UsageError);
}
