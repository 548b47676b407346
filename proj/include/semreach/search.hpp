#pragma once
// Grid search over 8-connected admissible vertices: class-dependent clearance
// masks, A* to a goal set, and single-source Dijkstra.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <tuple>
#include <vector>

#include "semreach/domain.hpp"

namespace semreach {

inline constexpr std::array<std::array<int, 2>, 8> kNeighbors8{{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

inline bool are_neighbors8(GridPos a, GridPos b) noexcept {
    const int dr = std::abs(a.row - b.row);
    const int dc = std::abs(a.col - b.col);
    return dr <= 1 && dc <= 1 && (dr + dc) > 0;
}

/// Vertex mask: v is admissible iff for every cell j labelled k != free,
/// |c_v - c_j| >= d_k + margin.
inline std::vector<std::uint8_t> admissible_mask(const GridGeometry& g, std::span<const ClassId> labels,
                                                 const SemanticClassTable& classes, double margin) {
    std::vector<std::uint8_t> ok(g.size(), 1);
    const double res2 = g.resolution * g.resolution;
    for (CellIndex j = 0; j < labels.size(); ++j) {
        const ClassId k = labels[j];
        if (k == kFreeClass) continue;
        const double radius = classes.safety_distance(k) + margin;
        const double r2 = radius * radius;
        const int reach = static_cast<int>(std::ceil(radius / g.resolution));
        const GridPos p = g.pos(j);
        const int r0 = std::max(0, p.row - reach), r1 = std::min(g.height - 1, p.row + reach);
        const int c0 = std::max(0, p.col - reach), c1 = std::min(g.width - 1, p.col + reach);
        for (int r = r0; r <= r1; ++r) {
            const double dr = r - p.row;
            for (int c = c0; c <= c1; ++c) {
                const double dc = c - p.col;
                if (res2 * (dr * dr + dc * dc) < r2) ok[static_cast<CellIndex>(r) * g.width + c] = 0;
            }
        }
    }
    return ok;
}

/// Same predicate evaluated directly for one vertex.
inline bool vertex_admissible(const GridGeometry& g, GridPos v, std::span<const ClassId> labels,
                              const SemanticClassTable& classes, double margin) {
    const double res2 = g.resolution * g.resolution;
    for (CellIndex j = 0; j < labels.size(); ++j) {
        const ClassId k = labels[j];
        if (k == kFreeClass) continue;
        const double radius = classes.safety_distance(k) + margin;
        const GridPos p = g.pos(j);
        const double dr = v.row - p.row, dc = v.col - p.col;
        if (res2 * (dr * dr + dc * dc) < radius * radius) return false;
    }
    return true;
}

struct PlannedPath {
    Path states;  // states.front() is the start
    double cost = 0.0;
};

namespace detail {

inline double octile(GridPos a, GridPos b, double res) noexcept {
    const double dr = std::abs(a.row - b.row), dc = std::abs(a.col - b.col);
    return res * (std::max(dr, dc) + (std::sqrt(2.0) - 1.0) * std::min(dr, dc));
}

inline Path unwind(const GridGeometry& g, const std::vector<CellIndex>& parent, CellIndex start, CellIndex end) {
    Path out;
    for (CellIndex v = end;; v = parent[v]) {
        out.push_back(g.pos(v));
        if (v == start) break;
    }
    return {out.rbegin(), out.rend()};
}

inline constexpr CellIndex kNone = std::numeric_limits<CellIndex>::max();

}  // namespace detail

/// A* from `start` to any vertex in `goals`, through admissible vertices only.
/// The start itself is exempt from admissibility only when `start_exempt`.
/// Ties break on f, then h, then lowest vertex index.
inline std::optional<PlannedPath> astar(const GridGeometry& g, std::span<const std::uint8_t> admissible, GridPos start,
                                        std::span<const CellIndex> goals, bool start_exempt = false) {
    const CellIndex s = g.index(start);
    if (!start_exempt && !admissible[s]) return std::nullopt;

    std::vector<std::uint8_t> is_goal(g.size(), 0);
    std::vector<GridPos> goal_pos;
    for (CellIndex j : goals) {
        if (!admissible[j]) continue;
        is_goal[j] = 1;
        goal_pos.push_back(g.pos(j));
    }
    if (goal_pos.empty()) return std::nullopt;

    auto h = [&](GridPos p) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : goal_pos) best = std::min(best, detail::octile(p, q, g.resolution));
        return best;
    };

    using Entry = std::tuple<double, double, CellIndex>;  // f, h, index
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    std::vector<double> cost(g.size(), std::numeric_limits<double>::infinity());
    std::vector<CellIndex> parent(g.size(), detail::kNone);
    std::vector<std::uint8_t> closed(g.size(), 0);

    cost[s] = 0.0;
    const double h0 = h(start);
    open.emplace(h0, h0, s);
    while (!open.empty()) {
        const auto [f, hv, v] = open.top();
        open.pop();
        if (closed[v]) continue;
        closed[v] = 1;
        if (is_goal[v]) return PlannedPath{detail::unwind(g, parent, s, v), cost[v]};
        const GridPos p = g.pos(v);
        for (const auto& d : kNeighbors8) {
            const GridPos q{p.row + d[0], p.col + d[1]};
            if (!g.contains(q)) continue;
            const CellIndex w = g.index(q);
            if (closed[w] || !admissible[w]) continue;
            const double step = (d[0] != 0 && d[1] != 0) ? g.resolution * std::sqrt(2.0) : g.resolution;
            const double c = cost[v] + step;
            if (c < cost[w]) {
                cost[w] = c;
                parent[w] = v;
                const double hw = h(q);
                open.emplace(c + hw, hw, w);
            }
        }
    }
    return std::nullopt;
}

/// Shortest-path tree from `start` over admissible vertices (start exempt).
struct DistanceField {
    std::vector<double> cost;
    std::vector<CellIndex> parent;
    CellIndex source = 0;

    bool reachable(CellIndex v) const { return std::isfinite(cost[v]); }
};

inline DistanceField dijkstra(const GridGeometry& g, std::span<const std::uint8_t> admissible, GridPos start) {
    DistanceField out;
    out.source = g.index(start);
    out.cost.assign(g.size(), std::numeric_limits<double>::infinity());
    out.parent.assign(g.size(), detail::kNone);
    using Entry = std::pair<double, CellIndex>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    out.cost[out.source] = 0.0;
    open.emplace(0.0, out.source);
    while (!open.empty()) {
        const auto [c, v] = open.top();
        open.pop();
        if (c > out.cost[v]) continue;
        const GridPos p = g.pos(v);
        for (const auto& d : kNeighbors8) {
            const GridPos q{p.row + d[0], p.col + d[1]};
            if (!g.contains(q)) continue;
            const CellIndex w = g.index(q);
            if (!admissible[w]) continue;
            const double step = (d[0] != 0 && d[1] != 0) ? g.resolution * std::sqrt(2.0) : g.resolution;
            if (c + step < out.cost[w]) {
                out.cost[w] = c + step;
                out.parent[w] = v;
                open.emplace(out.cost[w], w);
            }
        }
    }
    return out;
}

inline PlannedPath extract_path(const GridGeometry& g, const DistanceField& field, CellIndex target) {
    return {detail::unwind(g, field.parent, field.source, target), field.cost[target]};
}

}  // namespace semreach

namespace semreach {

/// Shortest start-to-goal path under the true labels with the planner's
/// clearance margin (one grid resolution). Nothing if the scenario has none.
inline std::optional<PlannedPath> ground_truth_shortest_path(const Scenario& s) {
    const auto& g = s.geometry();
    const auto ok = admissible_mask(g, s.world.truth, s.classes(), g.resolution);
    const auto goals = s.task.goal_cells(g);
    return astar(g, ok, s.start, goals);
}

}  // namespace semreach
