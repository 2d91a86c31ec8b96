#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hotspot/csv.hpp"
#include "hotspot/error.hpp"
#include "hotspot/geogrid.hpp"
#include "json.hpp"

namespace hotspot {

// ---------------------------------------------------------------------------
// Time: UTC seconds, weeks anchored on ISO Mondays. Week 0 starts 1970-01-05.
// ---------------------------------------------------------------------------
namespace detail {
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
    const std::int64_t q = a / b;
    return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}
}  // namespace detail

constexpr std::int64_t seconds_per_day = 86400;
constexpr std::int64_t seconds_per_week = 7 * seconds_per_day;

constexpr int week_of(std::int64_t timestamp) noexcept {
    const std::int64_t day = detail::floor_div(timestamp, seconds_per_day);
    return static_cast<int>(detail::floor_div(day - 4, 7));
}

constexpr std::int64_t week_start(int week) noexcept {
    return (static_cast<std::int64_t>(week) * 7 + 4) * seconds_per_day;
}

// Accepts YYYY-MM-DD, YYYY-MM-DDTHH:MM:SS and the same with a trailing Z.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    s = csv::trim(s);
    if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char tail = 0;
    const std::string str(s);
    int matched = 0;
    if (str.size() == 10) {
        matched = std::sscanf(str.c_str(), "%4d-%2d-%2d%c", &y, &mo, &d, &tail);
        if (matched != 3) return std::nullopt;
    } else if (str.size() == 19 && (str[10] == 'T' || str[10] == ' ')) {
        const std::string norm = str.substr(0, 10) + "T" + str.substr(11);
        matched = std::sscanf(norm.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &sec, &tail);
        if (matched != 6) return std::nullopt;
    } else {
        return std::nullopt;
    }
    if (str[4] != '-' || str[7] != '-') return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 59 || h < 0 || mi < 0 || sec < 0) return std::nullopt;
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * seconds_per_day + h * 3600 + mi * 60 + sec;
}

inline std::string format_timestamp(std::int64_t ts) {
    using namespace std::chrono;
    const auto day = detail::floor_div(ts, seconds_per_day);
    const std::int64_t rem = ts - day * seconds_per_day;
    const year_month_day ymd{sys_days{days{day}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
    return buf;
}

// ---------------------------------------------------------------------------
// Indicator dictionary
// ---------------------------------------------------------------------------
struct IndicatorDictionary {
    std::vector<std::string> p1v;
    std::vector<std::string> p1p;
    std::vector<std::string> offense_indicators;  // other offense categories
    std::vector<std::string> call_indicators;     // 911 call categories
    std::set<std::string> excluded;               // dropped at category level (e.g. retail)

    static IndicatorDictionary standard() {
        IndicatorDictionary d;
        d.p1v = {"homicide", "rape", "robbery", "aggravated_assault"};
        d.p1p = {"burglary", "larceny", "vehicle_theft"};
        d.offense_indicators = {"simple_assault",     "vandalism",          "liquor_law",
                                "public_drunkenness", "disorderly_conduct", "criminal_mischief",
                                "trespass"};
        d.call_indicators = {"cad_assault",      "cad_burglary",       "cad_criminal_mischief",
                             "cad_disorderly_person", "cad_disturbance", "cad_drug_complaint",
                             "cad_harassment",   "cad_larceny",        "cad_suspicious_activity",
                             "cad_vehicle_theft", "cad_weapons_gunshot"};
        d.excluded = {"retail_theft"};
        return d;
    }

    // Panel variable order: P1V, P1P, other offenses, calls, then excluded categories.
    std::vector<std::string> categories() const {
        std::vector<std::string> out;
        for (const auto* list : {&p1v, &p1p, &offense_indicators, &call_indicators})
            out.insert(out.end(), list->begin(), list->end());
        return out;
    }
    bool contains(const std::string& c) const {
        const auto all = categories();
        return std::find(all.begin(), all.end(), c) != all.end() || excluded.count(c) > 0;
    }
    bool is_p1v(const std::string& c) const { return std::find(p1v.begin(), p1v.end(), c) != p1v.end(); }
    bool is_p1p(const std::string& c) const { return std::find(p1p.begin(), p1p.end(), c) != p1p.end(); }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& c : categories()) {
            if (c.empty()) throw UsageError("empty category name in dictionary");
            if (!seen.insert(c).second) throw UsageError("category '" + c + "' listed more than once");
            if (excluded.count(c)) throw UsageError("category '" + c + "' is both indicator and excluded");
        }
    }
};

inline void to_json(nlohmann::json& j, const IndicatorDictionary& d) {
    j = {{"p1v", d.p1v},
         {"p1p", d.p1p},
         {"offense_indicators", d.offense_indicators},
         {"call_indicators", d.call_indicators},
         {"excluded", d.excluded}};
}

inline void from_json(const nlohmann::json& j, IndicatorDictionary& d) {
    d = IndicatorDictionary{};
    j.at("p1v").get_to(d.p1v);
    j.at("p1p").get_to(d.p1p);
    if (j.contains("offense_indicators")) j.at("offense_indicators").get_to(d.offense_indicators);
    if (j.contains("call_indicators")) j.at("call_indicators").get_to(d.call_indicators);
    if (j.contains("excluded")) j.at("excluded").get_to(d.excluded);
    d.validate();
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------
enum class Source { offense, call };

struct EventRecord {
    std::int64_t timestamp = 0;
    double x = 0.0;
    double y = 0.0;
    Source source = Source::offense;
    std::string category;
    bool domestic = false;
    std::optional<std::string> victim_group;

    bool operator==(const EventRecord&) const = default;
};

struct Rejection {
    int line = 0;
    std::string reason;
    std::string raw;
};

struct ParsedEvents {
    std::vector<EventRecord> events;
    std::vector<Rejection> rejections;
    std::size_t rows = 0;  // data rows read, excluding header and blank lines
};

inline constexpr const char* event_csv_header = "timestamp_iso8601,x_ft,y_ft,source,category,domestic,victim_group";

inline ParsedEvents parse_events(std::istream& in, const IndicatorDictionary& dict) {
    if (!in) throw DataError("event stream is unreadable");
    std::string line;
    if (!std::getline(in, line)) {
        if (in.bad()) throw DataError("event stream is unreadable");
        throw DataError("event file has no header row");
    }
    const auto header = csv::split(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"timestamp_iso8601", "x_ft", "y_ft", "source", "category", "domestic"})
        if (!col.count(required)) throw DataError(std::string("event header lacks column ") + required);
    const bool has_victim = col.count("victim_group") > 0;

    ParsedEvents out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        ++out.rows;
        const auto f = csv::split(line);
        auto reject = [&](std::string reason) { out.rejections.push_back({line_no, std::move(reason), line}); };
        if (f.size() < header.size() - (has_victim ? 1 : 0)) {
            reject("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
            continue;
        }
        auto field = [&](const char* name) -> std::string {
            const auto i = col.at(name);
            return i < f.size() ? f[i] : std::string{};
        };
        EventRecord e;
        const auto ts = parse_timestamp(field("timestamp_iso8601"));
        if (!ts) { reject("timestamp is not ISO 8601"); continue; }
        e.timestamp = *ts;
        const auto x = csv::to_double(field("x_ft"));
        const auto y = csv::to_double(field("y_ft"));
        if (!x || !y || !std::isfinite(*x) || !std::isfinite(*y)) { reject("coordinates are not finite numbers"); continue; }
        e.x = *x;
        e.y = *y;
        const auto src = field("source");
        if (src == "offense") e.source = Source::offense;
        else if (src == "call") e.source = Source::call;
        else { reject("unknown source '" + src + "'"); continue; }
        e.category = field("category");
        if (!dict.contains(e.category)) { reject("unknown category '" + e.category + "'"); continue; }
        const auto dom = field("domestic");
        if (dom == "0") e.domestic = false;
        else if (dom == "1") e.domestic = true;
        else { reject("domestic flag must be 0 or 1"); continue; }
        if (has_victim) {
            auto v = field("victim_group");
            if (!v.empty()) e.victim_group = std::move(v);
        }
        out.events.push_back(std::move(e));
    }
    if (in.bad()) throw DataError("event stream failed while reading");
    return out;
}

inline void write_rejections_jsonl(std::ostream& out, const std::vector<Rejection>& rejections) {
    for (const auto& r : rejections)
        out << nlohmann::json{{"line", r.line}, {"reason", r.reason}, {"raw", r.raw}}.dump() << '\n';
}

inline void write_events_csv(std::ostream& out, const std::vector<EventRecord>& events) {
    out << event_csv_header << '\n';
    for (const auto& e : events) {
        out << format_timestamp(e.timestamp) << ',' << csv::format(e.x) << ',' << csv::format(e.y) << ','
            << (e.source == Source::offense ? "offense" : "call") << ',' << e.category << ','
            << (e.domestic ? 1 : 0) << ',' << e.victim_group.value_or("") << '\n';
    }
}

// ---------------------------------------------------------------------------
// PanelTensor: counts[variable][cell][week], cells by linear grid index.
// ---------------------------------------------------------------------------
class PanelTensor {
public:
    PanelTensor() = default;
    PanelTensor(std::vector<std::string> variables, int first_week, int n_weeks, int n_cells)
        : variables_(std::move(variables)), first_week_(first_week), n_weeks_(n_weeks), n_cells_(n_cells),
          counts_(variables_.size() * static_cast<std::size_t>(n_cells) * n_weeks, 0) {
        if (n_weeks < 1) throw UsageError("panel needs at least one week");
        if (n_cells < 1) throw UsageError("panel needs at least one cell");
    }

    const std::vector<std::string>& variables() const noexcept { return variables_; }
    int n_variables() const noexcept { return static_cast<int>(variables_.size()); }
    int first_week() const noexcept { return first_week_; }
    int n_weeks() const noexcept { return n_weeks_; }
    int end_week() const noexcept { return first_week_ + n_weeks_; }  // exclusive
    int n_cells() const noexcept { return n_cells_; }
    bool has_week(int w) const noexcept { return w >= first_week_ && w < end_week(); }

    bool has_variable(const std::string& name) const {
        return std::find(variables_.begin(), variables_.end(), name) != variables_.end();
    }
    int variable_index(const std::string& name) const {
        auto it = std::find(variables_.begin(), variables_.end(), name);
        if (it == variables_.end()) throw DataError("panel has no variable '" + name + "'");
        return static_cast<int>(it - variables_.begin());
    }

    int at(int v, int cell, int week) const { return counts_[offset(v, cell, week)]; }
    int& at(int v, int cell, int week) { return counts_[offset(v, cell, week)]; }

    std::span<const int> series(int v, int cell) const {
        return {counts_.data() + offset(v, cell, first_week_), static_cast<std::size_t>(n_weeks_)};
    }

    long long total() const {
        long long s = 0;
        for (int c : counts_) s += c;
        return s;
    }
    long long total(int v) const {
        long long s = 0;
        for (int cell = 0; cell < n_cells_; ++cell)
            for (int c : series(v, cell)) s += c;
        return s;
    }

    // Copy with an extra variable equal to the sum of `members`.
    PanelTensor with_aggregate(const std::string& name, const std::vector<std::string>& members) const {
        if (has_variable(name)) throw UsageError("panel already has variable '" + name + "'");
        auto vars = variables_;
        vars.push_back(name);
        PanelTensor out(std::move(vars), first_week_, n_weeks_, n_cells_);
        std::copy(counts_.begin(), counts_.end(), out.counts_.begin());
        const int target = n_variables();
        for (const auto& m : members) {
            if (!has_variable(m)) continue;
            const int v = variable_index(m);
            for (int cell = 0; cell < n_cells_; ++cell)
                for (int w = first_week_; w < end_week(); ++w) out.at(target, cell, w) += at(v, cell, w);
        }
        return out;
    }

    // Elementwise merge of a shard-local panel with identical layout.
    PanelTensor& operator+=(const PanelTensor& other) {
        if (other.variables_ != variables_ || other.first_week_ != first_week_ || other.n_weeks_ != n_weeks_ ||
            other.n_cells_ != n_cells_)
            throw UsageError("cannot merge panels with different layouts");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
        return *this;
    }

    bool operator==(const PanelTensor&) const = default;

private:
    std::size_t offset(int v, int cell, int week) const {
        if (v < 0 || v >= n_variables() || cell < 0 || cell >= n_cells_ || !has_week(week))
            throw DataError("panel index out of range (variable " + std::to_string(v) + ", cell " +
                            std::to_string(cell) + ", week " + std::to_string(week) + ")");
        return (static_cast<std::size_t>(v) * n_cells_ + cell) * n_weeks_ + (week - first_week_);
    }

    std::vector<std::string> variables_;
    int first_week_ = 0;
    int n_weeks_ = 0;
    int n_cells_ = 0;
    std::vector<int> counts_;
};

struct WeekRange {
    int first = 0;
    int count = 0;
    int end() const noexcept { return first + count; }
};

struct PanelBuild {
    PanelTensor panel;
    std::size_t retained = 0;
    std::size_t out_of_mask = 0;
    std::size_t out_of_range = 0;
    std::size_t excluded_domestic = 0;
    std::size_t excluded_category = 0;

    std::size_t dropped() const noexcept { return out_of_mask + out_of_range; }
    std::size_t excluded() const noexcept { return excluded_domestic + excluded_category; }
};

// Aggregates events to cell-week counts. Domestic P1V events and categories on
// the exclusion list are excluded; events outside the mask or range are dropped.
inline PanelBuild build_panel(std::span<const EventRecord> events, const GridSpec& grid,
                              const IndicatorDictionary& dict, WeekRange weeks) {
    if (weeks.count < 1) throw UsageError("week range is empty");
    const auto vars = dict.categories();
    std::map<std::string, int> var_index;
    for (std::size_t i = 0; i < vars.size(); ++i) var_index[vars[i]] = static_cast<int>(i);
    PanelBuild out{PanelTensor(vars, weeks.first, weeks.count, grid.size())};
    for (const auto& e : events) {
        if (dict.excluded.count(e.category)) {
            ++out.excluded_category;
            continue;
        }
        auto it = var_index.find(e.category);
        if (it == var_index.end()) throw DataError("event category '" + e.category + "' not in dictionary");
        if (e.domestic && dict.is_p1v(e.category)) {
            ++out.excluded_domestic;
            continue;
        }
        const int w = week_of(e.timestamp);
        if (w < weeks.first || w >= weeks.end()) {
            ++out.out_of_range;
            continue;
        }
        CellId c;
        try {
            c = cell_of({e.x, e.y}, grid);
        } catch (const OutOfMaskError&) {
            ++out.out_of_mask;
            continue;
        }
        ++out.panel.at(it->second, grid.index(c), w);
        ++out.retained;
    }
    return out;
}

// Adds the P1V and P1P aggregates used as targets and outcomes.
inline PanelTensor with_standard_aggregates(const PanelTensor& panel, const IndicatorDictionary& dict) {
    auto out = panel.has_variable("P1V") ? panel : panel.with_aggregate("P1V", dict.p1v);
    return out.has_variable("P1P") ? out : out.with_aggregate("P1P", dict.p1p);
}

// ---------------------------------------------------------------------------
// Panel archive: sparse CSV (variable,cell,week,count) plus a JSON header.
// ---------------------------------------------------------------------------
inline void write_panel(std::ostream& meta, std::ostream& counts, const PanelTensor& p) {
    meta << nlohmann::json{{"variables", p.variables()},
                           {"first_week", p.first_week()},
                           {"n_weeks", p.n_weeks()},
                           {"n_cells", p.n_cells()},
                           {"first_week_start", format_timestamp(week_start(p.first_week()))}}
                .dump(2)
         << '\n';
    counts << "variable,cell,week,count\n";
    for (int v = 0; v < p.n_variables(); ++v)
        for (int cell = 0; cell < p.n_cells(); ++cell)
            for (int w = p.first_week(); w < p.end_week(); ++w)
                if (int c = p.at(v, cell, w); c != 0)
                    counts << p.variables()[v] << ',' << cell << ',' << w << ',' << c << '\n';
}

inline PanelTensor read_panel(std::istream& meta, std::istream& counts) {
    nlohmann::json j;
    try {
        meta >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("panel header is not valid JSON: ") + e.what());
    }
    PanelTensor p(j.at("variables").get<std::vector<std::string>>(), j.at("first_week").get<int>(),
                  j.at("n_weeks").get<int>(), j.at("n_cells").get<int>());
    std::string line;
    std::getline(counts, line);
    int line_no = 1;
    while (std::getline(counts, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        const auto cell = f.size() == 4 ? csv::to_int(f[1]) : std::nullopt;
        const auto week = f.size() == 4 ? csv::to_int(f[2]) : std::nullopt;
        const auto cnt = f.size() == 4 ? csv::to_int(f[3]) : std::nullopt;
        if (!cell || !week || !cnt || *cnt < 0)
            throw DataError("panel counts line " + std::to_string(line_no) + " is malformed");
        p.at(p.variable_index(f[0]), static_cast<int>(*cell), static_cast<int>(*week)) = static_cast<int>(*cnt);
    }
    return p;
}

}  // namespace hotspot
