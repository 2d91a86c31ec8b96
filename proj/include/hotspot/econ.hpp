#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hotspot/csv.hpp"
#include "hotspot/error.hpp"

namespace hotspot {

// Per-offense social cost in dollars, keyed by event category.
struct CostTable {
    int year = 2008;
    std::map<std::string, double> cost;

    double at(const std::string& category) const {
        auto it = cost.find(category);
        if (it == cost.end()) throw DataError("cost table has no entry for '" + category + "'");
        return it->second;
    }

    void validate() const {
        if (cost.empty()) throw DataError("cost table is empty");
        for (auto& [k, v] : cost)
            if (!(v > 0) || !std::isfinite(v)) throw DataError("cost for '" + k + "' must be positive");
    }

    // Published 2008 per-offense costs to society.
    static CostTable base_2008() {
        return {2008,
                {{"homicide", 8982907},
                 {"rape", 240776},
                 {"aggravated_assault", 107020},
                 {"robbery", 42310},
                 {"burglary", 6462},
                 {"larceny", 3532},
                 {"vehicle_theft", 10772}}};
    }
};

// 2008 to 2018 factor implied by the two published homicide figures.
inline double default_inflation_factor() { return 10548448.0 / 8982907.0; }

// Scales every cost; rounds to whole dollars unless told otherwise.
inline CostTable inflate(const CostTable& t, double factor, int to_year, bool round_dollars = true) {
    if (!(factor > 0) || !std::isfinite(factor)) throw UsageError("inflation factor must be positive");
    CostTable out{to_year, {}};
    for (auto& [k, v] : t.cost) out.cost[k] = round_dollars ? std::round(v * factor) : v * factor;
    return out;
}

struct ValuedComponent {
    std::string category;
    double count = 0.0;
    double unit_cost = 0.0;
    double subtotal = 0.0;
};

struct Valuation {
    std::vector<ValuedComponent> components;
    double total = 0.0;
};

// Dollar value of prevented crimes: sum of count times unit cost.
inline Valuation crimes_avoided_value(const std::map<std::string, double>& prevented, const CostTable& t) {
    Valuation v;
    for (auto& [k, n] : prevented) {
        if (!std::isfinite(n)) throw DataError("prevented count for '" + k + "' is not finite");
        const double c = t.at(k);
        v.components.push_back({k, n, c, n * c});
        v.total += n * c;
    }
    return v;
}

// Splits a prevented total across categories in proportion to an observed mix.
inline std::map<std::string, double> allocate_by_mix(double total, const std::map<std::string, double>& observed) {
    double sum = 0;
    for (auto& [k, n] : observed) {
        if (!(n >= 0)) throw DataError("observed counts must be >= 0");
        sum += n;
    }
    if (sum <= 0) throw DataError("observed offense mix is empty");
    std::map<std::string, double> out;
    for (auto& [k, n] : observed) out[k] = total * n / sum;
    return out;
}

struct ProgramCostInputs {
    double annual_budget = 48.5e6;
    double officers = 755;
    double benefits_uplift = 0.20;
    double hours_per_officer_year = 2080;
    double program_hours = 7744;

    void validate() const {
        for (double v : {annual_budget, officers, hours_per_officer_year})
            if (!(v > 0) || !std::isfinite(v)) throw UsageError("budget, officers and hours per year must be positive");
        if (!(benefits_uplift >= 0) || !(program_hours >= 0)) throw UsageError("uplift and program hours must be >= 0");
    }
    double hourly_rate() const { return annual_budget / officers * (1 + benefits_uplift) / hours_per_officer_year; }
};

inline double patrol_cost(const ProgramCostInputs& in) {
    in.validate();
    return in.hourly_rate() * in.program_hours;
}

inline double benefit_cost(double value, double cost) {
    if (!(cost > 0)) throw DataError("benefit/cost ratio needs a positive cost");
    return value / cost;
}

inline void to_json(nlohmann::json& j, const ProgramCostInputs& p) {
    j = {{"annual_budget", p.annual_budget},
         {"officers", p.officers},
         {"benefits_uplift", p.benefits_uplift},
         {"hours_per_officer_year", p.hours_per_officer_year},
         {"program_hours", p.program_hours}};
}

inline void from_json(const nlohmann::json& j, ProgramCostInputs& p) {
    try {
        p.annual_budget = j.value("annual_budget", p.annual_budget);
        p.officers = j.value("officers", p.officers);
        p.benefits_uplift = j.value("benefits_uplift", p.benefits_uplift);
        p.hours_per_officer_year = j.value("hours_per_officer_year", p.hours_per_officer_year);
        p.program_hours = j.value("program_hours", p.program_hours);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid program cost inputs: ") + e.what());
    }
}

// Full cost-benefit report with every intermediate.
inline nlohmann::json cost_benefit_report(const std::map<std::string, double>& prevented, const CostTable& base,
                                          double factor, int report_year, const ProgramCostInputs& inputs) {
    const auto table = inflate(base, factor, report_year);
    const auto value = crimes_avoided_value(prevented, table);
    const double cost = patrol_cost(inputs);
    nlohmann::json comps = nlohmann::json::array();
    for (auto& c : value.components)
        comps.push_back({{"category", c.category}, {"count", c.count}, {"unit_cost", c.unit_cost}, {"subtotal", c.subtotal}});
    nlohmann::json costs = nlohmann::json::object();
    for (auto& [k, v] : table.cost) costs[k] = v;
    nlohmann::json base_costs = nlohmann::json::object();
    for (auto& [k, v] : base.cost) base_costs[k] = v;
    return {{"inflation_factor", factor},
            {"base_year", base.year},
            {"report_year", report_year},
            {"base_costs", base_costs},
            {"report_costs", costs},
            {"components", comps},
            {"value_avoided", value.total},
            {"program_inputs", inputs},
            {"hourly_rate", inputs.hourly_rate()},
            {"patrol_cost", cost},
            {"benefit_cost_ratio", cost > 0 ? nlohmann::json(benefit_cost(value.total, cost)) : nlohmann::json(nullptr)}};
}

inline void write_cost_table_csv(std::ostream& out, const CostTable& t) {
    out << "category,cost\n";
    for (auto& [k, v] : t.cost) out << k << ',' << csv::format(v) << '\n';
}

inline CostTable read_cost_table_csv(std::istream& in, int year) {
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != "category,cost") throw DataError("cost table header must be category,cost");
    CostTable t{year, {}};
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        const auto v = f.size() == 2 ? csv::to_double(f[1]) : std::nullopt;
        if (!v) throw DataError("cost table line " + std::to_string(line_no) + " is malformed");
        t.cost[std::string(csv::trim(f[0]))] = *v;
    }
    t.validate();
    return t;
}

}  // namespace hotspot
