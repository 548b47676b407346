#pragma once
// Core value types: grid geometry, semantic classes, worlds, tasks, scenarios,
// and the ground-truth reach-avoid predicate used by evaluation.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace semreach {

using ClassId = int;
using CellIndex = std::size_t;

inline constexpr ClassId kFreeClass = 0;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(Vec2 a, Vec2 b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

struct GridPos {
    int row = 0;
    int col = 0;

    friend auto operator<=>(const GridPos&, const GridPos&) = default;
};

/// A robot configuration: a grid cell, interpreted at its center.
using RobotState = GridPos;
using Path = std::vector<RobotState>;

struct SemanticClass {
    ClassId id = 0;
    std::string name;
    double safety_distance = 0.0;  // meters

    friend bool operator==(const SemanticClass&, const SemanticClass&) = default;
};

/// Ordered class list with contiguous ids 0..K; id 0 is free space with d_0 = 0.
class SemanticClassTable {
public:
    SemanticClassTable() = default;

    explicit SemanticClassTable(std::vector<SemanticClass> classes) : classes_(std::move(classes)) {
        if (classes_.size() < 2) throw std::invalid_argument("class table needs free space and at least one object class");
        if (classes_.size() > 32) throw std::invalid_argument("class table supports at most 32 classes");
        for (std::size_t i = 0; i < classes_.size(); ++i) {
            if (classes_[i].id != static_cast<ClassId>(i))
                throw std::invalid_argument("class ids must be contiguous from 0");
            if (!(classes_[i].safety_distance >= 0.0))
                throw std::invalid_argument("safety distance of class '" + classes_[i].name + "' is negative");
        }
        if (classes_[0].safety_distance != 0.0)
            throw std::invalid_argument("free class (id 0) must have safety distance 0");
    }

    std::size_t size() const noexcept { return classes_.size(); }
    bool valid(ClassId k) const noexcept { return k >= 0 && static_cast<std::size_t>(k) < classes_.size(); }
    double safety_distance(ClassId k) const { return classes_.at(static_cast<std::size_t>(k)).safety_distance; }
    const std::string& name(ClassId k) const { return classes_.at(static_cast<std::size_t>(k)).name; }
    std::span<const SemanticClass> classes() const noexcept { return classes_; }

    std::optional<ClassId> find(std::string_view name) const {
        for (const auto& c : classes_)
            if (c.name == name) return c.id;
        return std::nullopt;
    }

    double max_safety_distance() const noexcept {
        double m = 0.0;
        for (const auto& c : classes_) m = std::max(m, c.safety_distance);
        return m;
    }

    friend bool operator==(const SemanticClassTable&, const SemanticClassTable&) = default;

private:
    std::vector<SemanticClass> classes_;
};

/// The five-class table used throughout the experiments.
inline SemanticClassTable default_class_table() {
    return SemanticClassTable({{0, "free", 0.0}, {1, "person", 4.0}, {2, "car", 1.0}, {3, "truck", 2.0}, {4, "tree", 0.5}});
}

/// Row-major grid; cell (row, col) has center origin + resolution * (col, row).
struct GridGeometry {
    int width = 0;
    int height = 0;
    double resolution = 1.0;
    Vec2 origin{};

    void validate() const {
        if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
        if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }

    bool contains(GridPos p) const noexcept { return p.row >= 0 && p.col >= 0 && p.row < height && p.col < width; }

    CellIndex index(GridPos p) const {
        if (!contains(p)) throw std::out_of_range("grid position outside the map");
        return static_cast<CellIndex>(p.row) * static_cast<CellIndex>(width) + static_cast<CellIndex>(p.col);
    }

    GridPos pos(CellIndex j) const {
        if (j >= size()) throw std::out_of_range("cell index outside the map");
        return {static_cast<int>(j / static_cast<CellIndex>(width)), static_cast<int>(j % static_cast<CellIndex>(width))};
    }

    Vec2 center(GridPos p) const noexcept {
        return {origin.x + resolution * static_cast<double>(p.col), origin.y + resolution * static_cast<double>(p.row)};
    }

    /// Index of the cell containing a world position.
    CellIndex index_of(Vec2 w) const {
        const double c = std::floor((w.x - origin.x) / resolution + 0.5);
        const double r = std::floor((w.y - origin.y) / resolution + 0.5);
        if (c < 0 || r < 0 || c >= width || r >= height) throw std::out_of_range("world position outside the map");
        return index({static_cast<int>(r), static_cast<int>(c)});
    }

    /// Distance in meters between two cell centers.
    double distance(GridPos a, GridPos b) const noexcept {
        return resolution * std::hypot(static_cast<double>(a.row - b.row), static_cast<double>(a.col - b.col));
    }

    friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// World position of cell j's center.
inline Vec2 cell_center(const GridGeometry& g, CellIndex j) { return g.center(g.pos(j)); }

struct GroundTruthWorld {
    GridGeometry geometry;
    std::vector<ClassId> truth;  // row-major, length width * height

    ClassId at(CellIndex j) const { return truth.at(j); }
    ClassId at(GridPos p) const { return truth.at(geometry.index(p)); }

    std::vector<CellIndex> occupied_cells() const {
        std::vector<CellIndex> out;
        for (CellIndex j = 0; j < truth.size(); ++j)
            if (truth[j] != kFreeClass) out.push_back(j);
        return out;
    }

    void validate(const SemanticClassTable& classes) const {
        geometry.validate();
        if (truth.size() != geometry.size()) throw std::invalid_argument("truth length does not match grid size");
        for (ClassId k : truth)
            if (!classes.valid(k)) throw std::invalid_argument("truth contains unknown class id " + std::to_string(k));
    }

    friend bool operator==(const GroundTruthWorld&, const GroundTruthWorld&) = default;
};

/// Reach a disc of goal cells while respecting the class safety distances.
struct Task {
    GridPos goal;
    double goal_radius_m = 1.0;
    SemanticClassTable classes;

    bool in_goal(const GridGeometry& g, GridPos p) const noexcept {
        return g.contains(p) && g.distance(p, goal) <= goal_radius_m + 1e-9;
    }

    std::vector<CellIndex> goal_cells(const GridGeometry& g) const {
        std::vector<CellIndex> out;
        const int reach = static_cast<int>(std::ceil(goal_radius_m / g.resolution)) + 1;
        for (int r = goal.row - reach; r <= goal.row + reach; ++r)
            for (int c = goal.col - reach; c <= goal.col + reach; ++c)
                if (in_goal(g, {r, c})) out.push_back(g.index({r, c}));
        std::sort(out.begin(), out.end());
        return out;
    }

    friend bool operator==(const Task&, const Task&) = default;
};

struct Scenario {
    std::uint64_t seed = 0;
    RobotState start;
    GroundTruthWorld world;
    Task task;

    const SemanticClassTable& classes() const noexcept { return task.classes; }
    const GridGeometry& geometry() const noexcept { return world.geometry; }

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Distance-to-object safety of a single state against ground truth.
inline bool state_is_safe(GridPos x, const GroundTruthWorld& world, const SemanticClassTable& classes,
                          std::span<const CellIndex> occupied) {
    for (CellIndex j : occupied) {
        const ClassId k = world.truth[j];
        if (world.geometry.distance(x, world.geometry.pos(j)) < classes.safety_distance(k)) return false;
    }
    return true;
}

/// Ground-truth oracle: the final state is in the goal region and every state
/// keeps d_k from every cell of class k. Only the evaluation side calls this.
inline bool path_satisfies_task(std::span<const RobotState> path, const GroundTruthWorld& world, const Task& task) {
    if (path.empty()) throw std::invalid_argument("path_satisfies_task: empty path");
    if (!task.in_goal(world.geometry, path.back())) return false;
    const auto occupied = world.occupied_cells();
    for (const auto& x : path)
        if (!state_is_safe(x, world, task.classes, occupied)) return false;
    return true;
}

/// Domain-level scenario invariants. Returns a description of the first
/// violated constraint, or nothing if the scenario is well formed.
inline std::optional<std::string> scenario_violation(const Scenario& s) {
    try {
        s.world.validate(s.classes());
    } catch (const std::exception& e) {
        return std::string(e.what());
    }
    const auto& g = s.geometry();
    if (!g.contains(s.start)) return "start outside the map";
    if (s.world.at(s.start) != kFreeClass) return "start cell is occupied";
    const auto occupied = s.world.occupied_cells();
    if (!state_is_safe(s.start, s.world, s.classes(), occupied)) return "start violates a safety distance";
    const auto goals = s.task.goal_cells(g);
    if (goals.empty()) return "goal region is empty";
    for (CellIndex j : goals)
        if (s.world.at(j) != kFreeClass) return "goal region contains an occupied cell";
    return std::nullopt;
}

}  // namespace semreach
