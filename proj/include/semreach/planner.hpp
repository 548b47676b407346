#pragma once
// Online planning over calibrated semantic maps.
//
// Each step: scan, fuse the scan into the belief map, build prediction sets,
// assign every observed cell the set member with the largest safety distance,
// then try to reach the goal with A* through vertices that keep d_k + r_m
// from every labelled cell. If no such path exists, move toward the nearest
// vertex that can shrink an ambiguous set. Only the first move of either plan
// is executed before replanning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <tuple>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semreach/conformal.hpp"
#include "semreach/domain.hpp"
#include "semreach/mapper.hpp"
#include "semreach/rng.hpp"
#include "semreach/search.hpp"
#include "semreach/sensor.hpp"

namespace semreach {

enum class Framework { ours, ui, ua };
enum class StepMode { exploit, explore };
enum class Termination { goal, timeout, stuck };

inline const char* to_string(Framework f) {
    switch (f) {
        case Framework::ours: return "ours";
        case Framework::ui: return "ui";
        case Framework::ua: return "ua";
    }
    return "?";
}
inline const char* to_string(StepMode m) { return m == StepMode::exploit ? "exploit" : "explore"; }
inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::goal: return "goal";
        case Termination::timeout: return "timeout";
        case Termination::stuck: return "stuck";
    }
    return "?";
}

inline std::optional<Framework> parse_framework(std::string_view s) {
    if (s == "ours") return Framework::ours;
    if (s == "ui") return Framework::ui;
    if (s == "ua") return Framework::ua;
    return std::nullopt;
}

struct PlannerConfig {
    int max_steps = 0;  // 0 selects 20 * (width + height)

    int horizon(const GridGeometry& g) const { return max_steps > 0 ? max_steps : 20 * (g.width + g.height); }
};

/// How prediction sets are built: calibrated threshold, cumulative-mass
/// heuristic, or plain argmax.
struct SetPolicy {
    Framework framework = Framework::ours;
    double s_hat = 1.0;      // ours
    double threshold = 0.0;  // ours: 1 - s_hat, exact
    double alpha = 0.1;      // ui (also recorded for ours)

    static SetPolicy ours(double s_hat, double alpha) { return {Framework::ours, s_hat, 1.0 - s_hat, alpha}; }
    static SetPolicy ours(const CalibrationArtifact& a, double alpha) {
        return {Framework::ours, a.quantile_for(alpha), a.threshold_for(alpha), alpha};
    }
    static SetPolicy ui(double alpha) { return {Framework::ui, kNaN, kNaN, alpha}; }
    static SetPolicy ua() { return {Framework::ua, kNaN, kNaN, kNaN}; }

    PredictionSetMap build(const BeliefMap& belief, const SemanticClassTable& classes) const {
        switch (framework) {
            case Framework::ours: return conformalize_threshold(belief, threshold, classes);
            case Framework::ui: return ui_sets(belief, alpha);
            case Framework::ua: return ua_sets(belief);
        }
        throw std::logic_error("unknown framework");
    }

private:
    static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
};

using LabelEntry = std::pair<CellIndex, ClassId>;

struct StepRecord {
    RobotState state;
    StepMode mode = StepMode::exploit;
    std::vector<std::size_t> set_histogram;
    bool covered = true;                 // every set on J_t held the true class
    std::vector<LabelEntry> labels;      // non-free labels within reach of the chosen move
    std::vector<LabelEntry> hits;        // distinct (cell, label) returns of this step's scan
};

struct MissionTrace {
    Scenario scenario;
    Framework framework = Framework::ours;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double s_hat = std::numeric_limits<double>::quiet_NaN();
    double threshold = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t noise_seed = 0;
    Path states;                     // x_0 .. x_H
    std::vector<StepRecord> steps;   // steps[t] chose states[t + 1]; a stuck mission ends with one extra scan
    Termination termination = Termination::stuck;
};

// ---------------------------------------------------------------------------
// Label assignment and planning

/// Worst-case label per cell: the member of C_j with the largest d_k (lowest
/// id on ties). Unobserved cells are free.
inline std::vector<ClassId> assign_worst_case_labels(const PredictionSetMap& sets, const SemanticClassTable& classes) {
    std::vector<ClassId> out(sets.geometry().size(), kFreeClass);
    for (CellIndex j : sets.observed_cells()) {
        ClassId best = kFreeClass;
        double best_d = -1.0;
        for (ClassId k : sets.set(j).members()) {
            const double d = classes.safety_distance(k);
            if (d > best_d) {
                best = k;
                best_d = d;
            }
        }
        out[j] = best;
    }
    return out;
}

struct ExploitResult {
    std::optional<PlannedPath> path;
    bool start_admissible = true;
};

inline ExploitResult plan_exploit_masked(const GridGeometry& g, std::span<const std::uint8_t> admissible, RobotState x,
                                         const Task& task) {
    if (!admissible[g.index(x)]) return {std::nullopt, false};
    const auto goals = task.goal_cells(g);
    return {astar(g, admissible, x, goals), true};
}

/// A* to the goal region through vertices keeping d_{k_j} + r_m from every
/// labelled cell. Nothing if no such path exists or x itself is too close.
inline ExploitResult plan_exploit(RobotState x, const Task& task, std::span<const ClassId> labels, const GridGeometry& g) {
    const auto ok = admissible_mask(g, labels, task.classes, g.resolution);
    return plan_exploit_masked(g, ok, x, task);
}

inline std::optional<PlannedPath> plan_explore_masked(const GridGeometry& g, std::span<const std::uint8_t> admissible,
                                                      RobotState x, const PredictionSetMap& sets,
                                                      std::span<const std::uint32_t> visits = {}) {
    auto seen = [&](CellIndex v) -> std::uint32_t { return visits.empty() ? 0u : visits[v]; };
    const CellIndex here = g.index(x);
    const auto field = dijkstra(g, admissible, x);

    std::vector<GridPos> ambiguous;
    for (CellIndex j : sets.observed_cells())
        if (sets.set(j).size() > 1) ambiguous.push_back(g.pos(j));

    std::optional<CellIndex> target;
    if (!ambiguous.empty()) {
        // Least visited, then nearest to any ambiguous cell, then cheapest to
        // reach, then lowest index. Visit counts push repeated exploration
        // around the cell to new viewpoints.
        std::tuple<std::uint32_t, long, double> best{std::numeric_limits<std::uint32_t>::max(), 0, 0.0};
        for (CellIndex v = 0; v < g.size(); ++v) {
            if (v == here || !admissible[v] || !field.reachable(v)) continue;
            const GridPos p = g.pos(v);
            long d2 = std::numeric_limits<long>::max();
            for (const auto& a : ambiguous) {
                const long dr = p.row - a.row, dc = p.col - a.col;
                d2 = std::min(d2, dr * dr + dc * dc);
            }
            const std::tuple<std::uint32_t, long, double> key{seen(v), d2, field.cost[v]};
            if (!target || key < best) {
                best = key;
                target = v;
            }
        }
    } else {
        // Nearest admissible vertex bordering unobserved space.
        double best_cost = std::numeric_limits<double>::infinity();
        for (CellIndex v = 0; v < g.size(); ++v) {
            if (v == here || !admissible[v] || !field.reachable(v)) continue;
            const GridPos p = g.pos(v);
            bool frontier = !sets.observed(v);
            for (const auto& d : kNeighbors8) {
                if (frontier) break;
                const GridPos q{p.row + d[0], p.col + d[1]};
                frontier = g.contains(q) && !sets.observed(g.index(q));
            }
            if (frontier && field.cost[v] < best_cost) {
                best_cost = field.cost[v];
                target = v;
            }
        }
    }
    if (!target) return std::nullopt;
    return extract_path(g, field, *target);
}

/// Exploration move toward ambiguity (or, with none left, toward unobserved
/// space). The current vertex is exempt from admissibility so the robot can
/// back out of a clearance zone that appeared around it.
inline std::optional<PlannedPath> plan_explore(RobotState x, const PredictionSetMap& sets, std::span<const ClassId> labels,
                                               const SemanticClassTable& classes,
                                               std::span<const std::uint32_t> visits = {}) {
    const auto& g = sets.geometry();
    const auto ok = admissible_mask(g, labels, classes, g.resolution);
    return plan_explore_masked(g, ok, x, sets, visits);
}

// ---------------------------------------------------------------------------
// Mission loop

/// Non-free labels that can constrain vertex v: those with d_k + margin
/// beyond their distance to v. Farther labels cannot affect admissibility.
inline std::vector<LabelEntry> labels_near(const PredictionSetMap& sets, std::span<const ClassId> labels,
                                           const SemanticClassTable& classes, GridPos v, double margin) {
    const auto& g = sets.geometry();
    std::vector<LabelEntry> out;
    for (CellIndex j : sets.observed_cells()) {
        const ClassId k = labels[j];
        if (k == kFreeClass) continue;
        if (g.distance(v, g.pos(j)) < classes.safety_distance(k) + margin + g.resolution) out.emplace_back(j, k);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<LabelEntry> distinct_hits(const Measurement& z) {
    std::vector<LabelEntry> out;
    for (const auto& r : z.rays()) {
        if (r.hit) out.emplace_back(r.hit->cell, r.hit->label);
        for (const auto& h : z.occluded(r)) out.emplace_back(h.cell, h.label);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline void check_mission_inputs(const Scenario& s, const RangeSensor& sensor, const MapperConfig& mapper) {
    const auto& classes = s.classes();
    s.world.validate(classes);
    sensor.config().validate(classes);
    mapper.validate(classes);
}

/// Run one mission to goal, timeout or stuck. The scenario's truth is used
/// only to simulate the sensor and to stamp each step's coverage bit.
inline MissionTrace run_mission(const Scenario& scenario, const SetPolicy& policy, const RangeSensor& sensor,
                                const MapperConfig& mapper, const PlannerConfig& planner, const NoiseStream& noise) {
    check_mission_inputs(scenario, sensor, mapper);
    const auto& g = scenario.geometry();
    const auto& classes = scenario.classes();
    const auto& task = scenario.task;

    MissionTrace trace;
    trace.scenario = scenario;
    trace.framework = policy.framework;
    trace.alpha = policy.alpha;
    trace.s_hat = policy.s_hat;
    trace.threshold = policy.threshold;
    trace.noise_seed = noise.seed();
    trace.states.push_back(scenario.start);

    auto belief = BeliefMap::fresh(g, mapper, classes.size());
    std::vector<std::uint32_t> visits(g.size(), 0);
    const int horizon = planner.horizon(g);
    double heading = 0.0;

    for (std::uint64_t t = 0;; ++t) {
        const RobotState x = trace.states.back();
        if (task.in_goal(g, x)) {
            trace.termination = Termination::goal;
            break;
        }
        if (t >= static_cast<std::uint64_t>(horizon)) {
            trace.termination = Termination::timeout;
            break;
        }
        const auto z = sensor.sense(scenario.world, x, noise, t, heading);
        belief.apply(z, mapper);
        const auto sets = policy.build(belief, classes);
        const auto labels = policy.framework == Framework::ua ? ua_labels(belief) : assign_worst_case_labels(sets, classes);
        const auto ok = admissible_mask(g, labels, classes, g.resolution);

        StepRecord rec;
        rec.state = x;
        rec.set_histogram = sets.size_histogram();
        rec.covered = sets.covers(scenario.world.truth);
        rec.hits = distinct_hits(z);

        auto exploit = plan_exploit_masked(g, ok, x, task);
        std::optional<PlannedPath> plan = std::move(exploit.path);
        rec.mode = StepMode::exploit;
        if (!plan) {
            plan = plan_explore_masked(g, ok, x, sets, visits);
            rec.mode = StepMode::explore;
        }
        if (!plan || plan->states.size() < 2) {
            // The final scan is kept; it chose no successor.
            rec.labels = labels_near(sets, labels, classes, x, g.resolution);
            trace.steps.push_back(std::move(rec));
            trace.termination = Termination::stuck;
            break;
        }
        ++visits[g.index(x)];
        const RobotState next = plan->states[1];
        rec.labels = labels_near(sets, labels, classes, next, g.resolution);
        heading = std::atan2(static_cast<double>(next.row - x.row), static_cast<double>(next.col - x.col));
        trace.steps.push_back(std::move(rec));
        trace.states.push_back(next);
    }
    return trace;
}

inline MissionTrace run_mission(const Scenario& scenario, const SetPolicy& policy, const SensorConfig& sensor,
                                const MapperConfig& mapper, const PlannerConfig& planner, const NoiseStream& noise) {
    return run_mission(scenario, policy, RangeSensor(sensor, scenario.geometry().resolution), mapper, planner, noise);
}

// ---------------------------------------------------------------------------
// Trace checks

/// Re-verify a trace from its own contents. Returns one message per violation.
inline std::vector<std::string> verify_trace(const MissionTrace& tr) {
    std::vector<std::string> bad;
    const auto& s = tr.scenario;
    const auto& g = s.geometry();
    const auto& classes = s.classes();
    if (tr.states.empty()) return {"trace has no states"};
    const std::size_t expected = tr.states.size() - (tr.termination == Termination::stuck ? 0 : 1);
    if (tr.steps.size() != expected) bad.push_back("state/step count mismatch");
    if (tr.states.front() != s.start) bad.push_back("trace does not start at the scenario start");
    for (std::size_t t = 0; t + 1 < tr.states.size(); ++t) {
        const auto& a = tr.states[t];
        const auto& b = tr.states[t + 1];
        const std::string at = "step " + std::to_string(t) + ": ";
        if (!g.contains(b)) {
            bad.push_back(at + "state outside the map");
            continue;
        }
        if (!are_neighbors8(a, b)) bad.push_back(at + "move is not an 8-neighbour step");
        if (t >= tr.steps.size()) continue;
        if (tr.steps[t].state != a) bad.push_back(at + "recorded state differs from the path");
        std::vector<ClassId> labels(g.size(), kFreeClass);
        for (const auto& [j, k] : tr.steps[t].labels) {
            if (j >= g.size() || !classes.valid(k)) {
                bad.push_back(at + "label entry out of range");
                continue;
            }
            labels[j] = k;
        }
        if (!vertex_admissible(g, b, labels, classes, g.resolution))
            bad.push_back(at + "next state violates the clearance constraint against its assigned labels");
    }
    if (tr.steps.size() == tr.states.size() && tr.steps.back().state != tr.states.back())
        bad.push_back("final scan position differs from the final state");
    const bool in_goal = s.task.in_goal(g, tr.states.back());
    if (in_goal != (tr.termination == Termination::goal)) bad.push_back("goal termination does not match the final state");

    bool covered = true;
    for (const auto& st : tr.steps) covered = covered && st.covered;
    if (covered && tr.termination == Termination::goal && !path_satisfies_task(tr.states, s.world, s.task))
        bad.push_back("all sets covered the truth and the goal was reached, yet the path is unsafe");
    return bad;
}

}  // namespace semreach
