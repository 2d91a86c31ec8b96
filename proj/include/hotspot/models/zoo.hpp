#pragma once

#include <algorithm>
#include <cctype>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hotspot/features.hpp"
#include "hotspot/geogrid.hpp"
#include "hotspot/ingest.hpp"
#include "hotspot/models/cnn.hpp"
#include "hotspot/models/common.hpp"
#include "hotspot/models/gp.hpp"
#include "hotspot/models/kde.hpp"
#include "hotspot/models/l1_logistic.hpp"
#include "hotspot/models/mlp.hpp"
#include "hotspot/models/scan.hpp"
#include "hotspot/models/sepp.hpp"
#include "json.hpp"

namespace hotspot {

enum class ModelKind { mavg, kde, lasso_lc, lasso_cc, gp, sepp_uni, sepp_multi, mlp_lc, mlp_nh, cnn, mlp_diff };

inline constexpr std::array<std::pair<ModelKind, std::string_view>, 11> model_kind_names{{
    {ModelKind::mavg, "MAVG"},
    {ModelKind::kde, "KDE"},
    {ModelKind::lasso_lc, "LASSO-LC"},
    {ModelKind::lasso_cc, "LASSO-CC"},
    {ModelKind::gp, "GP"},
    {ModelKind::sepp_uni, "SEPP-UNI"},
    {ModelKind::sepp_multi, "SEPP-MULTI"},
    {ModelKind::mlp_lc, "MLP-LC"},
    {ModelKind::mlp_nh, "MLP-NH"},
    {ModelKind::cnn, "CNN"},
    {ModelKind::mlp_diff, "MLP-DIFF"},
}};

inline std::string to_string(ModelKind k) {
    for (const auto& [kind, name] : model_kind_names)
        if (kind == k) return std::string(name);
    return "?";
}

// Accepts the display name in any case, with '_' standing for '-'.
inline ModelKind parse_model_kind(std::string_view s) {
    std::string key(s);
    for (auto& ch : key) ch = ch == '_' ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    for (const auto& [kind, name] : model_kind_names)
        if (name == key) return kind;
    throw UsageError("unknown model kind '" + std::string(s) + "'");
}

inline bool is_mlp(ModelKind k) { return k == ModelKind::mlp_lc || k == ModelKind::mlp_nh || k == ModelKind::mlp_diff; }

struct ModelSpec {
    ModelKind kind = ModelKind::mavg;
    std::string target = "P1V";
    std::vector<std::string> indicators;  // leading indicators; the target is always included
    int training_weeks = 104;
    int target_weeks = 52;  // most recent training weeks used as targets
    int window = 52;        // MAVG / KDE / SEPP look-back, weeks
    double bandwidth = 1000.0;  // KDE, feet
    std::optional<double> lambda;  // L1 penalty; empty selects by cross-validation
    int cv_folds = 5;
    std::vector<int> lags = default_lags();  // non-MLP lagged features
    int mlp_lags = 52;
    MlpOptions mlp;
    CnnOptions cnn;
    GpOptions gp;
    SeppOptions sepp;
    ScanOptions scan{6, 8, 44, 1.0, 5};
    std::uint64_t seed = 1;

    static ModelSpec of(ModelKind k) {
        ModelSpec s;
        s.kind = k;
        return s;
    }

    std::string name() const { return to_string(kind); }

    // Target first, then indicators, without duplicates.
    std::vector<std::string> variables() const {
        std::vector<std::string> v{target};
        for (const auto& i : indicators)
            if (std::find(v.begin(), v.end(), i) == v.end()) v.push_back(i);
        return v;
    }

    std::vector<int> feature_lags() const {
        if (is_mlp(kind)) return consecutive_lags(mlp_lags);
        return lags;
    }

    // Weeks of history a feature row needs before its own week.
    int feature_history() const {
        switch (kind) {
            case ModelKind::lasso_lc:
            case ModelKind::gp:
            case ModelKind::mlp_lc:
            case ModelKind::mlp_nh:
            case ModelKind::mlp_diff:
            case ModelKind::cnn: {
                const auto l = kind == ModelKind::cnn ? lags : feature_lags();
                int h = *std::max_element(l.begin(), l.end());
                if (kind == ModelKind::mlp_diff) h = std::max(h, 52);
                return h;
            }
            case ModelKind::lasso_cc:
                return scan.max_duration + scan.baseline_weeks;
            default:
                return 0;
        }
    }

    void validate() const {
        auto fail = [&](const std::string& why) { throw UsageError(name() + ": " + why); };
        if (target.empty()) fail("target variable is empty");
        if (training_weeks < 1 || target_weeks < 1 || target_weeks > training_weeks)
            fail("need 1 <= target_weeks <= training_weeks");
        if (window < 1) fail("window must be >= 1 week");
        if (!(bandwidth > 0)) fail("bandwidth must be positive");
        if (lambda && !(*lambda >= 0)) fail("L1 penalty must be >= 0");
        if (cv_folds < 2) fail("cross-validation needs >= 2 folds");
        if (lags.empty() || *std::min_element(lags.begin(), lags.end()) < 1) fail("lags must be >= 1");
        if (mlp_lags < 1) fail("MLP lags must be >= 1");
        if (mlp.hidden < 1) fail("hidden units must be >= 1");
        if (!(mlp.learning_rate > 0) || !(cnn.learning_rate > 0)) fail("learning rate must be positive");
        if (mlp.max_epochs < 1 || cnn.max_epochs < 1) fail("epochs must be >= 1");
        if (cnn.channels < 1 || cnn.layers < 1 || cnn.kernel < 1 || cnn.kernel % 2 == 0)
            fail("CNN needs positive channels and layers and an odd kernel");
        if (!(gp.length_space > 0) || !(gp.length_time > 0)) fail("GP length-scales must be positive");
        if (!(sepp.background_bandwidth > 0)) fail("SEPP bandwidth must be positive");
        if (kind == ModelKind::mavg || kind == ModelKind::kde || kind == ModelKind::sepp_uni ||
            kind == ModelKind::sepp_multi) {
            if (window > training_weeks) fail("window exceeds the training window");
        } else if (feature_history() + target_weeks > training_weeks) {
            fail("feature history plus target weeks exceeds the training window");
        }
    }
};

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = nlohmann::json{{"kind", s.name()},
                       {"target", s.target},
                       {"indicators", s.indicators},
                       {"training_weeks", s.training_weeks},
                       {"target_weeks", s.target_weeks},
                       {"window", s.window},
                       {"bandwidth", s.bandwidth},
                       {"cv_folds", s.cv_folds},
                       {"lags", s.lags},
                       {"mlp_lags", s.mlp_lags},
                       {"hidden", s.mlp.hidden},
                       {"learning_rate", s.mlp.learning_rate},
                       {"epochs", s.mlp.max_epochs},
                       {"patience", s.mlp.patience},
                       {"cnn_channels", s.cnn.channels},
                       {"cnn_kernel", s.cnn.kernel},
                       {"cnn_layers", s.cnn.layers},
                       {"cnn_learning_rate", s.cnn.learning_rate},
                       {"cnn_epochs", s.cnn.max_epochs},
                       {"gp_length_space", s.gp.length_space},
                       {"gp_length_time", s.gp.length_time},
                       {"gp_signal_fraction", s.gp.signal_fraction},
                       {"gp_max_rows", s.gp.max_rows},
                       {"sepp_bandwidth", s.sepp.background_bandwidth},
                       {"sepp_max_iterations", s.sepp.max_iterations},
                       {"scan_max_side", s.scan.max_side},
                       {"scan_max_duration", s.scan.max_duration},
                       {"scan_baseline_weeks", s.scan.baseline_weeks},
                       {"scan_shrinkage", s.scan.shrinkage},
                       {"scan_top_k", s.scan.top_k},
                       {"seed", s.seed}};
    j["lambda"] = s.lambda ? nlohmann::json(*s.lambda) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
    try {
        s = ModelSpec::of(parse_model_kind(j.at("kind").get<std::string>()));
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) j.at(key).get_to(field);
        };
        get("target", s.target);
        get("indicators", s.indicators);
        get("training_weeks", s.training_weeks);
        get("target_weeks", s.target_weeks);
        get("window", s.window);
        get("bandwidth", s.bandwidth);
        get("cv_folds", s.cv_folds);
        get("lags", s.lags);
        get("mlp_lags", s.mlp_lags);
        get("hidden", s.mlp.hidden);
        get("learning_rate", s.mlp.learning_rate);
        get("epochs", s.mlp.max_epochs);
        get("patience", s.mlp.patience);
        get("cnn_channels", s.cnn.channels);
        get("cnn_kernel", s.cnn.kernel);
        get("cnn_layers", s.cnn.layers);
        get("cnn_learning_rate", s.cnn.learning_rate);
        get("cnn_epochs", s.cnn.max_epochs);
        get("gp_length_space", s.gp.length_space);
        get("gp_length_time", s.gp.length_time);
        get("gp_signal_fraction", s.gp.signal_fraction);
        get("gp_max_rows", s.gp.max_rows);
        get("sepp_bandwidth", s.sepp.background_bandwidth);
        get("sepp_max_iterations", s.sepp.max_iterations);
        get("scan_max_side", s.scan.max_side);
        get("scan_max_duration", s.scan.max_duration);
        get("scan_baseline_weeks", s.scan.baseline_weeks);
        get("scan_shrinkage", s.scan.shrinkage);
        get("scan_top_k", s.scan.top_k);
        get("seed", s.seed);
        if (j.contains("lambda") && !j.at("lambda").is_null()) s.lambda = j.at("lambda").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid model spec: ") + e.what());
    }
    s.mlp.seed = s.cnn.seed = s.gp.seed = s.seed;
    s.validate();
}

struct MlpFit {
    MlpWeights weights;
    Standardizer standardizer;
    MlpTraining training;
};

struct CnnFit {
    CnnWeights weights;
    std::vector<double> channel_mean;
    std::vector<double> channel_scale;
};

struct L1Fit {
    L1Logistic model;
};

struct SeppFit {
    SeppModel model;
    int origin_week = 0;  // week mapped to time 0
};

using ModelParams = std::variant<std::monostate, L1Fit, GpModel, SeppFit, MlpFit, CnnFit>;

struct FittedModel {
    ModelSpec spec;
    int fit_week = 0;  // training window is [fit_week - training_weeks, fit_week - 1]
    ModelParams params;
};

namespace zoo_detail {

inline void require_history(const PanelTensor& panel, int week, int history) {
    const int earliest = panel.first_week() + history;
    if (week < earliest) throw InsufficientHistoryError(week, earliest);
    if (week > panel.end_week()) throw DataError("week " + std::to_string(week) + " is past the panel end");
}

inline std::vector<double> window_sum(const PanelTensor& panel, const GridSpec& grid, int v, int first, int last) {
    std::vector<double> out;
    out.reserve(grid.masked_cells().size());
    for (int cell : grid.masked_cells()) {
        long long s = 0;
        for (int w = first; w <= last; ++w) s += panel.at(v, cell, w);
        out.push_back(static_cast<double>(s));
    }
    return out;
}

inline FeatureMatrix lag_features(const ModelSpec& s, const PanelTensor& panel, const GridSpec& grid, int as_of) {
    const auto vars = s.variables();
    const auto lags = s.feature_lags();
    auto m = lag_stack(panel, grid, vars, lags, as_of);
    if (s.kind == ModelKind::mlp_nh) m = FeatureMatrix::hstack(m, neighborhood_stack(panel, grid, vars, lags, as_of));
    return m;
}

// Per variable: intensity, size and duration of the strongest cluster covering each cell.
inline FeatureMatrix cluster_features(const ModelSpec& s, const PanelTensor& panel, const GridSpec& grid,
                                      int as_of) {
    FeatureMatrix m;
    const auto vars = s.variables();
    for (const auto& v : vars)
        for (const char* f : {"cluster_intensity", "cluster_size", "cluster_duration"})
            m.columns.push_back({v + ":" + f, 0, false});
    for (int cell : grid.masked_cells()) m.rows.push_back({cell, as_of});
    m.values.assign(m.rows.size() * m.columns.size(), 0.0);
    for (std::size_t k = 0; k < vars.size(); ++k) {
        const auto clusters = scan_clusters(panel, grid, vars[k], as_of, s.scan);
        for (std::size_t r = 0; r < m.rows.size(); ++r) {
            const CellId c = grid.cell(m.rows[r].cell);
            const SpaceTimeCluster* best = nullptr;
            for (const auto& cl : clusters)
                if (cl.covers(c) && (!best || cl.intensity() > best->intensity())) best = &cl;
            if (!best) continue;
            m(r, 3 * k) = best->intensity();
            m(r, 3 * k + 1) = best->size();
            m(r, 3 * k + 2) = best->duration;
        }
    }
    return m;
}

inline FeatureMatrix features(const ModelSpec& s, const PanelTensor& panel, const GridSpec& grid, int as_of) {
    if (s.kind == ModelKind::lasso_cc) return cluster_features(s, panel, grid, as_of);
    if (s.kind == ModelKind::gp) return lag_stack(panel, grid, s.variables(), {1}, as_of);
    return lag_features(s, panel, grid, as_of);
}

inline std::vector<double> target_values(const ModelSpec& s, const PanelTensor& panel, const GridSpec& grid, int t) {
    if (s.kind == ModelKind::mlp_diff) return diff_target(panel, grid, s.target, t, 52).values;
    return count_target(panel, grid, s.target, t).values;
}

inline std::vector<SeppEvent> sepp_events(const ModelSpec& s, const PanelTensor& panel, const GridSpec& grid,
                                          int first, int last, int origin) {
    std::vector<SeppEvent> ev;
    const auto vars = s.kind == ModelKind::sepp_multi ? s.variables() : std::vector<std::string>{s.target};
    for (std::size_t k = 0; k < vars.size(); ++k) {
        const int v = panel.variable_index(vars[k]);
        for (int cell : grid.masked_cells()) {
            const Point p = grid.center(grid.cell(cell));
            for (int w = first; w <= last; ++w) {
                const int n = panel.at(v, cell, w);
                for (int j = 0; j < n; ++j)
                    ev.push_back({w - origin + (j + 0.5) / n, p.x, p.y, static_cast<int>(k)});
            }
        }
    }
    return ev;
}

inline Raster cnn_raster(const ModelSpec& s, const PanelTensor& panel, const GridSpec& grid, int as_of,
                         const std::vector<double>& mean, const std::vector<double>& scale) {
    const int v = panel.variable_index(s.target);
    Raster r(static_cast<int>(s.lags.size()), grid.n_rows(), grid.n_cols());
    for (std::size_t ch = 0; ch < s.lags.size(); ++ch)
        for (int cell : grid.masked_cells()) {
            const CellId c = grid.cell(cell);
            r(static_cast<int>(ch), c.row, c.col) = (panel.at(v, cell, as_of - s.lags[ch]) - mean[ch]) / scale[ch];
        }
    return r;
}

inline std::vector<char> cnn_mask(const GridSpec& grid) {
    std::vector<char> m(grid.size(), 0);
    for (int cell : grid.masked_cells()) m[cell] = 1;
    return m;
}

}  // namespace zoo_detail

// Fits on the training window [week - training_weeks, week - 1].
inline FittedModel fit(const ModelSpec& spec, const PanelTensor& panel, const GridSpec& grid, int week) {
    spec.validate();
    if (panel.n_cells() != grid.size()) throw DataError("panel and grid disagree on the number of cells");
    zoo_detail::require_history(panel, week, spec.training_weeks);
    FittedModel m{spec, week, std::monostate{}};
    const int first_target = week - spec.target_weeks;
    using zoo_detail::features;
    switch (spec.kind) {
        case ModelKind::mavg:
        case ModelKind::kde:
            panel.variable_index(spec.target);
            break;
        case ModelKind::lasso_lc:
        case ModelKind::lasso_cc: {
            FeatureMatrix x;
            std::vector<double> y;
            for (int t = first_target; t < week; ++t) {
                x.append(features(spec, panel, grid, t));
                for (double v : zoo_detail::target_values(spec, panel, grid, t)) y.push_back(v > 0 ? 1.0 : 0.0);
            }
            const auto xe = to_eigen(x);
            const auto ye = to_eigen(y);
            L1Fit f;
            f.model = spec.lambda ? fit_l1_logistic(xe, ye, *spec.lambda)
                                  : cross_validate_l1(xe, ye, spec.cv_folds, spec.seed, 12).model;
            m.params = f;
            break;
        }
        case ModelKind::gp: {
            GpData d;
            FeatureMatrix x;
            std::vector<double> y;
            for (int t = first_target; t < week; ++t) {
                x.append(features(spec, panel, grid, t));
                const auto v = zoo_detail::target_values(spec, panel, grid, t);
                y.insert(y.end(), v.begin(), v.end());
            }
            d.covariates = to_eigen(x);
            d.target = to_eigen(y);
            d.coords.resize(static_cast<Eigen::Index>(x.n_rows()), 3);
            for (std::size_t r = 0; r < x.n_rows(); ++r) {
                const Point p = grid.center(grid.cell(x.rows[r].cell));
                d.coords.row(static_cast<Eigen::Index>(r)) << p.x, p.y, x.rows[r].week;
            }
            auto opt = spec.gp;
            opt.seed = spec.seed;
            m.params = fit_gp(d, opt);
            break;
        }
        case ModelKind::sepp_uni:
        case ModelKind::sepp_multi: {
            const int origin = week - spec.window;
            auto opt = spec.sepp;
            opt.sigma_floor = std::max(opt.sigma_floor, grid.cell_size() / 2);
            opt.initial_sigma = std::max(opt.initial_sigma, opt.sigma_floor);
            const int types = spec.kind == ModelKind::sepp_multi ? static_cast<int>(spec.variables().size()) : 1;
            SeppFit f;
            f.origin_week = origin;
            f.model = fit_sepp(zoo_detail::sepp_events(spec, panel, grid, origin, week - 1, origin), spec.window,
                               types, opt);
            m.params = f;
            break;
        }
        case ModelKind::mlp_lc:
        case ModelKind::mlp_nh:
        case ModelKind::mlp_diff: {
            FeatureMatrix x;
            std::vector<double> y;
            for (int t = first_target; t < week; ++t) {
                x.append(features(spec, panel, grid, t));
                const auto v = zoo_detail::target_values(spec, panel, grid, t);
                y.insert(y.end(), v.begin(), v.end());
            }
            const auto raw = to_eigen(x);
            MlpFit f;
            f.standardizer = Standardizer::fit(raw);
            auto opt = spec.mlp;
            opt.seed = spec.seed;
            f.training = train_mlp(f.standardizer.apply(raw), to_eigen(y), opt);
            f.weights = f.training.weights;
            m.params = f;
            break;
        }
        case ModelKind::cnn: {
            const int v = panel.variable_index(spec.target);
            const auto& lags = spec.lags;
            // Channel statistics over every (cell, target week) in the training targets.
            CnnFit f;
            for (int lag : lags) {
                double s = 0, s2 = 0, n = 0;
                for (int t = first_target; t < week; ++t)
                    for (int cell : grid.masked_cells()) {
                        const double c = panel.at(v, cell, t - lag);
                        s += c;
                        s2 += c * c;
                        n += 1;
                    }
                const double mean = s / n, var = n > 1 ? (s2 - n * mean * mean) / (n - 1) : 0.0;
                f.channel_mean.push_back(mean);
                f.channel_scale.push_back(var > 1e-24 ? std::sqrt(var) : 1.0);
            }
            std::vector<Raster> inputs;
            std::vector<std::vector<double>> targets;
            for (int t = first_target; t < week; ++t) {
                inputs.push_back(zoo_detail::cnn_raster(spec, panel, grid, t, f.channel_mean, f.channel_scale));
                std::vector<double> target(grid.size(), 0.0);
                for (int cell : grid.masked_cells()) target[cell] = panel.at(v, cell, t);
                targets.push_back(std::move(target));
            }
            auto opt = spec.cnn;
            opt.seed = spec.seed;
            f.weights = train_cnn(inputs, targets, zoo_detail::cnn_mask(grid), opt).weights;
            m.params = f;
            break;
        }
    }
    return m;
}

// Scores every in-city cell for forecast week `week`, reading only weeks < week.
inline ScoreGrid score(const FittedModel& model, const PanelTensor& panel, const GridSpec& grid, int week) {
    const auto& spec = model.spec;
    if (panel.n_cells() != grid.size()) throw DataError("panel and grid disagree on the number of cells");
    if (week < model.fit_week) throw UsageError("cannot score a week before the model's training window ends");
    ScoreGrid out{week, grid.masked_cells(), {}};
    const int v = panel.variable_index(spec.target);
    switch (spec.kind) {
        case ModelKind::mavg:
            zoo_detail::require_history(panel, week, spec.window);
            out.scores = zoo_detail::window_sum(panel, grid, v, week - spec.window, week - 1);
            break;
        case ModelKind::kde: {
            zoo_detail::require_history(panel, week, spec.window);
            const auto counts = zoo_detail::window_sum(panel, grid, v, week - spec.window, week - 1);
            std::vector<WeightedPoint> pts;
            for (std::size_t k = 0; k < counts.size(); ++k) {
                if (counts[k] == 0) continue;
                const Point p = grid.center(grid.cell(grid.masked_cells()[k]));
                pts.push_back({p.x, p.y, counts[k]});
            }
            out.scores = kde_surface(pts, spec.bandwidth, grid);
            break;
        }
        case ModelKind::lasso_lc:
        case ModelKind::lasso_cc: {
            zoo_detail::require_history(panel, week, spec.feature_history());
            const auto& f = std::get<L1Fit>(model.params);
            const auto p = f.model.predict_proba(to_eigen(zoo_detail::features(spec, panel, grid, week)));
            out.scores.assign(p.data(), p.data() + p.size());
            break;
        }
        case ModelKind::gp: {
            zoo_detail::require_history(panel, week, spec.feature_history());
            const auto& gp = std::get<GpModel>(model.params);
            const auto x = zoo_detail::features(spec, panel, grid, week);
            Eigen::MatrixXd coords(static_cast<Eigen::Index>(x.n_rows()), 3);
            for (std::size_t r = 0; r < x.n_rows(); ++r) {
                const Point p = grid.center(grid.cell(x.rows[r].cell));
                coords.row(static_cast<Eigen::Index>(r)) << p.x, p.y, week;
            }
            const auto pred = gp.predict(coords, to_eigen(x));
            out.scores.assign(pred.data(), pred.data() + pred.size());
            break;
        }
        case ModelKind::sepp_uni:
        case ModelKind::sepp_multi: {
            zoo_detail::require_history(panel, week, spec.window);
            const auto& f = std::get<SeppFit>(model.params);
            SeppModel m = f.model;
            m.parents = zoo_detail::sepp_events(spec, panel, grid, week - spec.window, week - 1, f.origin_week);
            for (int cell : grid.masked_cells()) {
                const Point p = grid.center(grid.cell(cell));
                out.scores.push_back(m.intensity(week - f.origin_week, p.x, p.y));
            }
            break;
        }
        case ModelKind::mlp_lc:
        case ModelKind::mlp_nh:
        case ModelKind::mlp_diff: {
            zoo_detail::require_history(panel, week, spec.feature_lags().back());
            const auto& f = std::get<MlpFit>(model.params);
            const auto x = f.standardizer.apply(to_eigen(zoo_detail::lag_features(spec, panel, grid, week)));
            const auto pred = mlp_forward(f.weights, x);
            out.scores.assign(pred.data(), pred.data() + pred.size());
            // Deviations are clipped at zero, like the training target.
            if (spec.kind == ModelKind::mlp_diff)
                for (auto& v : out.scores) v = std::max(0.0, v);
            break;
        }
        case ModelKind::cnn: {
            zoo_detail::require_history(panel, week, *std::max_element(spec.lags.begin(), spec.lags.end()));
            const auto& f = std::get<CnnFit>(model.params);
            const auto r = cnn_forward(f.weights,
                                       zoo_detail::cnn_raster(spec, panel, grid, week, f.channel_mean, f.channel_scale));
            for (int cell : grid.masked_cells()) {
                const CellId c = grid.cell(cell);
                out.scores.push_back(r(0, c.row, c.col));
            }
            break;
        }
    }
    for (double s : out.scores)
        if (!std::isfinite(s)) throw NumericError(spec.name() + " produced a non-finite score for week " +
                                                  std::to_string(week));
    return out;
}

}  // namespace hotspot
