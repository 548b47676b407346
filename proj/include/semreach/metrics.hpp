#pragma once
// Per-mission metrics and grouped report rows.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semreach/domain.hpp"
#include "semreach/planner.hpp"
#include "semreach/stats.hpp"

namespace semreach {

struct MissionMetrics {
    bool sr_map = false;
    bool sr_mission = false;
    double path_length_m = 0.0;
    double exploration_proportion = 0.0;  // explore steps / executed steps
    Termination termination = Termination::stuck;
    std::size_t steps = 0;                // executed moves
};

/// Scores a trace against its scenario's ground truth.
inline MissionMetrics score_mission(const MissionTrace& trace, const Scenario& scenario) {
    const auto& g = scenario.geometry();
    if (trace.scenario.geometry() != g) throw std::invalid_argument("score_mission: trace and scenario geometry differ");
    if (trace.states.empty()) throw std::invalid_argument("score_mission: trace has no states");
    MissionMetrics m;
    m.termination = trace.termination;
    m.sr_map = std::all_of(trace.steps.begin(), trace.steps.end(), [](const StepRecord& s) { return s.covered; });
    m.sr_mission = trace.termination == Termination::goal && path_satisfies_task(trace.states, scenario.world, scenario.task);
    m.steps = trace.states.size() - 1;
    std::size_t explore = 0;
    for (std::size_t t = 0; t < m.steps; ++t) {
        m.path_length_m += g.distance(trace.states[t], trace.states[t + 1]);
        if (t < trace.steps.size() && trace.steps[t].mode == StepMode::explore) ++explore;
    }
    if (m.steps > 0) m.exploration_proportion = static_cast<double>(explore) / static_cast<double>(m.steps);
    return m;
}

inline MissionMetrics score_mission(const MissionTrace& trace) { return score_mission(trace, trace.scenario); }

/// One mission's metrics with its report group. alpha is NaN for groups that
/// do not depend on it.
struct LabelledMetrics {
    std::string framework;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    MissionMetrics metrics;
};

struct ReportRow {
    std::string framework;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    std::size_t n = 0;
    double sr_map_pct = 0.0;
    double sr_mission_pct = 0.0;
    std::optional<double> path_len_m;  // over successful missions
    std::optional<double> explore_pct;  // over successful missions
    double ci_low = 0.0;                // Wilson 95% for sr_mission, percent
    double ci_high = 0.0;
    std::optional<double> path_len_se;
    std::optional<double> explore_se;   // in percent
    std::size_t successes = 0;
};

namespace detail {

inline int framework_rank(const std::string& f) {
    if (f == "ours") return 0;
    if (f == "ui") return 1;
    if (f == "ua") return 2;
    return 3;
}

struct GroupKey {
    std::string framework;
    double alpha;

    bool operator<(const GroupKey& o) const {
        const int a = framework_rank(framework), b = framework_rank(o.framework);
        if (a != b) return a < b;
        if (framework != o.framework) return framework < o.framework;
        const bool na = std::isnan(alpha), nb = std::isnan(o.alpha);
        if (na != nb) return nb;  // numeric alphas first
        if (na) return false;
        return alpha < o.alpha;
    }
};

// Mean and standard error of the mean, summed in sorted order so the result
// does not depend on input order.
inline std::pair<double, double> mean_se(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += x;
    const double mean = s / n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace detail

/// Groups by (framework, alpha). Rows are ordered ours, ui, ua, then by
/// increasing alpha.
inline std::vector<ReportRow> aggregate(std::span<const LabelledMetrics> items) {
    std::map<detail::GroupKey, std::vector<const MissionMetrics*>> groups;
    for (const auto& it : items) groups[{it.framework, it.alpha}].push_back(&it.metrics);
    std::vector<ReportRow> rows;
    for (const auto& [key, ms] : groups) {
        ReportRow r;
        r.framework = key.framework;
        r.alpha = key.alpha;
        r.n = ms.size();
        std::size_t map_ok = 0;
        std::vector<double> lengths, explore;
        for (const auto* m : ms) {
            map_ok += m->sr_map;
            if (!m->sr_mission) continue;
            ++r.successes;
            lengths.push_back(m->path_length_m);
            explore.push_back(100.0 * m->exploration_proportion);
        }
        r.sr_map_pct = 100.0 * static_cast<double>(map_ok) / static_cast<double>(r.n);
        r.sr_mission_pct = 100.0 * static_cast<double>(r.successes) / static_cast<double>(r.n);
        const auto ci = stats::wilson_interval(r.successes, r.n);
        r.ci_low = 100.0 * ci.low;
        r.ci_high = 100.0 * ci.high;
        if (!lengths.empty()) {
            const auto [len, len_se] = detail::mean_se(lengths);
            const auto [exp, exp_se] = detail::mean_se(explore);
            r.path_len_m = len;
            r.path_len_se = len_se;
            r.explore_pct = exp;
            r.explore_se = exp_se;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::string format_fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    return s == "-0.00" ? "0.00" : s;
}

inline std::string report_csv(std::span<const ReportRow> rows) {
    std::string out = "framework,alpha,n,sr_map_pct,sr_mission_pct,path_len_m,explore_pct,ci_low,ci_high\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_fixed2(*v) : std::string("NA"); };
    for (const auto& r : rows) {
        out += r.framework + ',' + (std::isnan(r.alpha) ? std::string("NA") : format_fixed2(r.alpha)) + ',' +
               std::to_string(r.n) + ',' + format_fixed2(r.sr_map_pct) + ',' + format_fixed2(r.sr_mission_pct) + ',' +
               opt(r.path_len_m) + ',' + opt(r.explore_pct) + ',' + format_fixed2(r.ci_low) + ',' +
               format_fixed2(r.ci_high) + '\n';
    }
    return out;
}

}  // namespace semreach
