#pragma once
// Scenario sampler: a distribution over (start, world, task) triples laid out
// like a parking lot with a fixed tree block, randomly placed vehicles and a
// person who tends to stand near the trees.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semreach/domain.hpp"
#include "semreach/rng.hpp"
#include "semreach/search.hpp"

namespace semreach {

class GenerationError : public std::runtime_error {
public:
    GenerationError(std::uint64_t seed, const std::string& what)
        : std::runtime_error("scenario seed " + std::to_string(seed) + ": " + what), seed_(seed) {}
    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

enum class Placement { fixed, uniform, near };

/// One object kind. Footprints are `length` x 1 cells; uniform placement also
/// draws the orientation.
struct ObjectSpec {
    ClassId class_id = 0;
    Placement placement = Placement::uniform;
    int count = 1;
    int length = 1;
    std::vector<GridPos> fixed_cells;  // Placement::fixed
    ClassId near_class = 0;            // Placement::near
    double bias = 0.7;                 // probability of drawing from the near band
    int near_radius_cells = 2;         // Chebyshev radius of the near band
};

/// Out-of-distribution knobs: fixed-layout objects are replaced by a random
/// number of uniformly placed ones.
struct OodConfig {
    bool randomize_tree_layout = false;
    int tree_count_min = 6;
    int tree_count_max = 12;

    friend bool operator==(const OodConfig&, const OodConfig&) = default;
};

struct DistributionConfig {
    GridGeometry geometry{70, 25, 1.0, {0.0, 0.0}};
    SemanticClassTable classes = default_class_table();
    std::vector<ObjectSpec> objects;
    double min_separation_m = 40.0;
    double goal_radius_m = 1.5;
    OodConfig ood;
    int max_retries = 1000;

    void validate() const {
        geometry.validate();
        if (max_retries < 1) throw std::invalid_argument("max_retries must be at least 1");
        if (min_separation_m < 0.0) throw std::invalid_argument("min_separation_m must be non-negative");
        if (!(goal_radius_m >= 0.0)) throw std::invalid_argument("goal_radius_m must be non-negative");
        if (ood.tree_count_min < 0 || ood.tree_count_max < ood.tree_count_min)
            throw std::invalid_argument("invalid OOD tree count range");
        for (const auto& o : objects) {
            if (!classes.valid(o.class_id) || o.class_id == kFreeClass) throw std::invalid_argument("object class must be a non-free class");
            if (o.count < 0 || o.length < 1) throw std::invalid_argument("object count/length out of range");
            if (o.placement == Placement::near && (!classes.valid(o.near_class) || o.bias < 0.0 || o.bias > 1.0))
                throw std::invalid_argument("invalid near-placement rule");
            for (const auto& p : o.fixed_cells)
                if (!geometry.contains(p)) throw std::invalid_argument("fixed object cell outside the map");
        }
    }
};

/// 70 x 25 m lot at 1 m cells: three rows of three trees, a 2-cell car, a
/// 3-cell truck and a person placed near the trees with probability 0.7.
inline DistributionConfig default_distribution() {
    DistributionConfig c;
    const auto& k = c.classes;
    ObjectSpec trees;
    trees.class_id = *k.find("tree");
    trees.placement = Placement::fixed;
    for (int row : {6, 12, 18})
        for (int col : {25, 35, 45}) trees.fixed_cells.push_back({row, col});
    trees.count = static_cast<int>(trees.fixed_cells.size());

    ObjectSpec car;
    car.class_id = *k.find("car");
    car.length = 2;
    ObjectSpec truck;
    truck.class_id = *k.find("truck");
    truck.length = 3;
    ObjectSpec person;
    person.class_id = *k.find("person");
    person.placement = Placement::near;
    person.near_class = trees.class_id;
    person.bias = 0.7;
    person.near_radius_cells = 2;

    c.objects = {trees, car, truck, person};
    return c;
}

namespace detail {

inline ClassId widest_class(const SemanticClassTable& classes) {
    ClassId best = kFreeClass;
    for (const auto& c : classes.classes())
        if (c.safety_distance > classes.safety_distance(best)) best = c.id;
    return best;
}

struct Layout {
    std::vector<ClassId> truth;
    std::optional<std::string> violation;
};

inline bool place_bar(const GridGeometry& g, std::vector<ClassId>& truth, GridPos anchor, bool vertical, int length,
                      ClassId k) {
    std::vector<CellIndex> cells;
    for (int i = 0; i < length; ++i) {
        const GridPos p = vertical ? GridPos{anchor.row + i, anchor.col} : GridPos{anchor.row, anchor.col + i};
        if (!g.contains(p)) return false;
        const CellIndex j = g.index(p);
        if (truth[j] != kFreeClass) return false;
        cells.push_back(j);
    }
    for (CellIndex j : cells) truth[j] = k;
    return true;
}

inline bool place_uniform(const GridGeometry& g, std::vector<ClassId>& truth, int length, ClassId k, Rng& rng) {
    for (int tries = 0; tries < 100; ++tries) {
        const bool vertical = length > 1 && rng.below(2) == 1;
        const int rows = vertical ? g.height - length + 1 : g.height;
        const int cols = vertical ? g.width : g.width - length + 1;
        if (rows <= 0 || cols <= 0) return false;
        const GridPos anchor{static_cast<int>(rng.below(static_cast<std::uint64_t>(rows))),
                             static_cast<int>(rng.below(static_cast<std::uint64_t>(cols)))};
        if (place_bar(g, truth, anchor, vertical, length, k)) return true;
    }
    return false;
}

inline Layout sample_layout(const DistributionConfig& cfg, Rng& rng) {
    const auto& g = cfg.geometry;
    Layout out{std::vector<ClassId>(g.size(), kFreeClass), std::nullopt};
    auto fail = [&](const ObjectSpec& o, const char* why) {
        out.violation = "could not place " + cfg.classes.name(o.class_id) + ": " + why;
        return out;
    };
    for (const auto& o : cfg.objects) {
        if (o.placement == Placement::fixed && !cfg.ood.randomize_tree_layout) {
            for (const auto& p : o.fixed_cells) {
                if (!place_bar(g, out.truth, p, false, o.length, o.class_id)) return fail(o, "fixed cells overlap");
            }
            continue;
        }
        int count = o.count;
        if (o.placement == Placement::fixed) {
            const auto span = static_cast<std::uint64_t>(cfg.ood.tree_count_max - cfg.ood.tree_count_min + 1);
            count = cfg.ood.tree_count_min + static_cast<int>(rng.below(span));
        }
        for (int i = 0; i < count; ++i) {
            if (o.placement == Placement::near && rng.bernoulli(o.bias)) {
                std::vector<CellIndex> band;
                for (CellIndex j = 0; j < g.size(); ++j) {
                    if (out.truth[j] != kFreeClass) continue;
                    const GridPos p = g.pos(j);
                    bool near = false;
                    for (int dr = -o.near_radius_cells; dr <= o.near_radius_cells && !near; ++dr)
                        for (int dc = -o.near_radius_cells; dc <= o.near_radius_cells && !near; ++dc) {
                            const GridPos q{p.row + dr, p.col + dc};
                            near = g.contains(q) && out.truth[g.index(q)] == o.near_class;
                        }
                    if (!near) continue;
                    // The whole footprint has to fit starting at this cell.
                    bool fits = true;
                    for (int l = 1; l < o.length && fits; ++l) {
                        const GridPos q{p.row, p.col + l};
                        fits = g.contains(q) && out.truth[g.index(q)] == kFreeClass;
                    }
                    if (fits) band.push_back(j);
                }
                if (!band.empty()) {
                    const GridPos anchor = g.pos(band[rng.below(band.size())]);
                    place_bar(g, out.truth, anchor, false, o.length, o.class_id);
                    continue;
                }
            }
            if (!place_uniform(g, out.truth, o.length, o.class_id, rng)) return fail(o, "no free footprint");
        }
    }
    return out;
}

}  // namespace detail

/// Deterministic in (config, seed). Layouts are resampled until the start is
/// clear of every object by the largest safety distance plus one cell, the
/// goal disc is free, and a path keeping each object's safety distance plus
/// one cell joins them.
inline Scenario sample_scenario(const DistributionConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto& g = cfg.geometry;
    Rng rng(derive_seed(seed, "scenario"));
    std::string last = "no attempt made";
    for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
        auto layout = detail::sample_layout(cfg, rng);
        if (layout.violation) {
            last = *layout.violation;
            continue;
        }
        Scenario s;
        s.seed = seed;
        s.world = GroundTruthWorld{g, std::move(layout.truth)};
        s.task.classes = cfg.classes;
        s.task.goal_radius_m = cfg.goal_radius_m;

        // Starts keep the largest clearance from every object, so no labelling
        // of the first scan can make the start itself inadmissible.
        std::vector<ClassId> worst(g.size(), kFreeClass);
        const ClassId widest = detail::widest_class(cfg.classes);
        for (CellIndex j = 0; j < g.size(); ++j)
            if (s.world.truth[j] != kFreeClass) worst[j] = widest;
        const auto ok = admissible_mask(g, worst, cfg.classes, g.resolution);
        std::vector<CellIndex> starts;
        for (CellIndex j = 0; j < g.size(); ++j)
            if (ok[j] && s.world.truth[j] == kFreeClass) starts.push_back(j);
        if (starts.empty()) {
            last = "no admissible start cell";
            continue;
        }
        s.start = g.pos(starts[rng.below(starts.size())]);

        const auto goal_ok = admissible_mask(g, s.world.truth, cfg.classes, g.resolution);
        std::vector<CellIndex> goals;
        for (CellIndex j = 0; j < g.size(); ++j) {
            if (!goal_ok[j] || s.world.truth[j] != kFreeClass) continue;
            const GridPos p = g.pos(j);
            if (g.distance(p, s.start) < cfg.min_separation_m) continue;
            Task t = s.task;
            t.goal = p;
            const auto cells = t.goal_cells(g);
            if (t.in_goal(g, s.start)) continue;
            if (std::all_of(cells.begin(), cells.end(), [&](CellIndex c) { return s.world.truth[c] == kFreeClass; }))
                goals.push_back(j);
        }
        if (goals.empty()) {
            last = "no goal at the minimum start-goal separation";
            continue;
        }
        s.task.goal = g.pos(goals[rng.below(goals.size())]);

        if (auto v = scenario_violation(s)) {
            last = *v;
            continue;
        }
        if (!ground_truth_shortest_path(s)) {
            last = "no ground-truth feasible path from start to goal";
            continue;
        }
        return s;
    }
    throw GenerationError(seed, "retry budget of " + std::to_string(cfg.max_retries) + " exhausted; last violation: " + last);
}

/// Scenarios for seeds base_seed .. base_seed + n - 1.
inline std::vector<Scenario> sample_batch(const DistributionConfig& cfg, std::uint64_t base_seed, std::size_t n) {
    if (n < 1) throw std::invalid_argument("sample_batch: n must be at least 1");
    std::vector<Scenario> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_scenario(cfg, base_seed + i));
    return out;
}

}  // namespace semreach
