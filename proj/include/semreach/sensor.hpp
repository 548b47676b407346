#pragma once
// Omnidirectional labelled range sensor over a ground-truth grid.
//
// Rays are cast from the robot's cell center with a grid traversal
// (Amanatides-Woo) that visits every cell the ray crosses. Geometry is exact:
// a hit's range is the distance between cell centers. Only labels are noisy,
// drawn from the true confusion row of the hit cell's class. The draw is keyed
// by (scan step, cell), so every ray that lands on the same cell in one scan
// reports the same label, the way a segmentation mask labels an object
// consistently within a frame.
//
// With multi_return enabled (the default) a ray keeps going past its first
// hit and reports every further occupied cell within range as an occluded
// return, so each occupied cell inside the sensing disc is measured whenever
// some ray crosses it. Free-space evidence stops at the first hit.
//
// Partial occlusion: an occupied cell that sits behind an object of another
// class on at least one ray reports that occluder's class with probability
// occlusion_confusion, otherwise a draw from its own confusion row.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "semreach/confusion.hpp"
#include "semreach/domain.hpp"
#include "semreach/rng.hpp"

namespace semreach {

struct SensorConfig {
    double range_m = 10.0;
    int ray_count = 720;
    ConfusionMatrix true_confusion;
    double free_miss_rate = 0.0;
    double severity_scale = 0.0;
    std::optional<double> fov_deg;  // stress setting only; omnidirectional when unset
    bool multi_return = true;
    double occlusion_confusion = 0.0;  // P(a partly hidden cell reports its occluder's class)

    void validate(const SemanticClassTable& classes) const {
        if (!(range_m > 0.0)) throw std::invalid_argument("sensor range must be positive");
        if (ray_count <= 0) throw std::invalid_argument("ray_count must be positive");
        true_confusion.validate();
        if (true_confusion.size() != classes.size())
            throw std::invalid_argument("true confusion size does not match the class table");
        if (free_miss_rate < 0.0 || free_miss_rate > 1.0) throw std::invalid_argument("free_miss_rate must lie in [0, 1]");
        if (severity_scale < 0.0 || severity_scale > 1.0) throw std::invalid_argument("severity_scale must lie in [0, 1]");
        if (classes.max_safety_distance() > range_m)
            throw std::invalid_argument("sensor range is shorter than the largest safety distance");
        if (fov_deg && !(*fov_deg > 0.0 && *fov_deg <= 360.0)) throw std::invalid_argument("fov_deg must lie in (0, 360]");
        if (occlusion_confusion < 0.0 || occlusion_confusion > 1.0)
            throw std::invalid_argument("occlusion_confusion must lie in [0, 1]");
    }
};

struct RayHit {
    double range_m = 0.0;
    ClassId label = kFreeClass;
    CellIndex cell = 0;

    friend bool operator==(const RayHit&, const RayHit&) = default;
};

struct RayRecord {
    double bearing = 0.0;
    std::optional<RayHit> hit;
    std::uint32_t free_begin = 0, free_end = 0;          // into Measurement::free_cells_
    std::uint32_t occluded_begin = 0, occluded_end = 0;  // into Measurement::occluded_
};

class Measurement {
public:
    Measurement() = default;
    Measurement(GridPos origin, std::uint64_t step, int width, int height)
        : origin_(origin), step_(step), width_(width), height_(height) {}

    GridPos origin() const noexcept { return origin_; }
    std::uint64_t step() const noexcept { return step_; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    std::span<const RayRecord> rays() const noexcept { return rays_; }
    std::span<const CellIndex> traversed_free(const RayRecord& r) const {
        return std::span<const CellIndex>(free_cells_).subspan(r.free_begin, r.free_end - r.free_begin);
    }
    std::span<const RayHit> occluded(const RayRecord& r) const {
        return std::span<const RayHit>(occluded_).subspan(r.occluded_begin, r.occluded_end - r.occluded_begin);
    }
    std::span<const CellIndex> all_free_cells() const noexcept { return free_cells_; }
    std::span<const RayHit> all_occluded() const noexcept { return occluded_; }

    // Builder interface, used by the sensor and by tests that hand-craft scans.
    void reserve(std::size_t rays, std::size_t free_cells) {
        rays_.reserve(rays);
        free_cells_.reserve(free_cells);
    }
    RayRecord& begin_ray(double bearing) {
        RayRecord r;
        r.bearing = bearing;
        r.free_begin = r.free_end = static_cast<std::uint32_t>(free_cells_.size());
        r.occluded_begin = r.occluded_end = static_cast<std::uint32_t>(occluded_.size());
        rays_.push_back(r);
        return rays_.back();
    }
    void add_free(CellIndex j) {
        free_cells_.push_back(j);
        rays_.back().free_end = static_cast<std::uint32_t>(free_cells_.size());
    }
    void set_hit(const RayHit& h) { rays_.back().hit = h; }
    void add_occluded(const RayHit& h) {
        occluded_.push_back(h);
        rays_.back().occluded_end = static_cast<std::uint32_t>(occluded_.size());
    }
    /// Apply f to every hit and occluded return, in ray order.
    template <class F>
    void relabel(F&& f) {
        for (auto& r : rays_) {
            if (r.hit) f(*r.hit);
            for (std::uint32_t i = r.occluded_begin; i < r.occluded_end; ++i) f(occluded_[i]);
        }
    }

private:
    GridPos origin_{};
    std::uint64_t step_ = 0;
    int width_ = 0, height_ = 0;
    std::vector<RayRecord> rays_;
    std::vector<CellIndex> free_cells_;
    std::vector<RayHit> occluded_;
};

/// Cells a ray from a cell center crosses, in order, with center distances
/// in cells. Only cells whose center lies within `range_cells` are kept.
struct RayOffset {
    int drow = 0;
    int dcol = 0;
    double dist_cells = 0.0;
};

inline std::vector<RayOffset> traverse_ray(double bearing, double range_cells) {
    const double dx = std::cos(bearing), dy = std::sin(bearing);
    constexpr double inf = std::numeric_limits<double>::infinity();
    const int sx = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
    const int sy = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
    double t_max_x = sx != 0 ? 0.5 / std::abs(dx) : inf;
    double t_max_y = sy != 0 ? 0.5 / std::abs(dy) : inf;
    const double t_delta_x = sx != 0 ? 1.0 / std::abs(dx) : inf;
    const double t_delta_y = sy != 0 ? 1.0 / std::abs(dy) : inf;

    std::vector<RayOffset> out{{0, 0, 0.0}};
    int ix = 0, iy = 0;
    for (;;) {
        double t;
        if (t_max_x < t_max_y) {
            t = t_max_x;
            ix += sx;
            t_max_x += t_delta_x;
        } else if (t_max_y < t_max_x) {
            t = t_max_y;
            iy += sy;
            t_max_y += t_delta_y;
        } else {
            t = t_max_x;
            ix += sx;
            iy += sy;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
        if (t >= range_cells) break;
        const double d = std::hypot(static_cast<double>(ix), static_cast<double>(iy));
        if (d <= range_cells + 1e-9) out.push_back({iy, ix, d});
    }
    return out;
}

/// Sensor with precomputed ray templates; cheap to call once per step.
class RangeSensor {
public:
    RangeSensor(SensorConfig config, double resolution) : config_(std::move(config)), resolution_(resolution) {
        if (!(resolution_ > 0.0)) throw std::invalid_argument("resolution must be positive");
        effective_ = config_.true_confusion.blended_toward_uniform(config_.severity_scale);
        const double range_cells = config_.range_m / resolution_;
        bearings_.reserve(static_cast<std::size_t>(config_.ray_count));
        templates_.reserve(static_cast<std::size_t>(config_.ray_count));
        for (int b = 0; b < config_.ray_count; ++b) {
            const double theta = 2.0 * std::numbers::pi * b / config_.ray_count;
            bearings_.push_back(theta);
            templates_.push_back(traverse_ray(theta, range_cells));
            free_capacity_ += templates_.back().size();
        }
    }

    const SensorConfig& config() const noexcept { return config_; }
    const ConfusionMatrix& effective_confusion() const noexcept { return effective_; }

    /// One scan from x at time `step`. `heading` only matters with a FoV limit.
    Measurement sense(const GroundTruthWorld& world, RobotState x, const NoiseStream& noise, std::uint64_t step,
                      double heading = 0.0) const {
        const auto& g = world.geometry;
        if (!g.contains(x)) throw std::out_of_range("sensor position outside the map");
        constexpr CellIndex kNone = std::numeric_limits<CellIndex>::max();

        // Geometry first; labels are filled in once every ray is cast so a
        // cell partly hidden on any ray is known before it is labelled.
        Measurement m(x, step, g.width, g.height);
        m.reserve(templates_.size(), free_capacity_);
        std::vector<CellIndex> occluder(g.size(), kNone);
        for (std::size_t b = 0; b < templates_.size(); ++b) {
            if (config_.fov_deg && !in_fov(bearings_[b], heading)) continue;
            m.begin_ray(bearings_[b]);
            CellIndex first = kNone;
            for (const auto& off : templates_[b]) {
                const GridPos p{x.row + off.drow, x.col + off.dcol};
                if (!g.contains(p)) break;
                const CellIndex j = static_cast<CellIndex>(p.row) * static_cast<CellIndex>(g.width) + static_cast<CellIndex>(p.col);
                const ClassId k = world.truth[j];
                if (k == kFreeClass) {
                    if (first != kNone) continue;
                    if (config_.free_miss_rate > 0.0 && noise.uniform(step, j, kMissTag) < config_.free_miss_rate) continue;
                    m.add_free(j);
                    continue;
                }
                const RayHit h{off.dist_cells * resolution_, k, j};
                if (first == kNone) {
                    m.set_hit(h);
                    first = j;
                    if (!config_.multi_return) break;
                } else {
                    m.add_occluded(h);
                    if (occluder[j] == kNone && world.truth[first] != k) occluder[j] = first;
                }
            }
        }

        // One label per occupied cell per scan.
        std::vector<ClassId> label(g.size(), -1);
        m.relabel([&](RayHit& h) {
            ClassId& y = label[h.cell];
            if (y < 0) {
                const ClassId k = world.truth[h.cell];
                const CellIndex o = occluder[h.cell];
                if (o != kNone && config_.occlusion_confusion > 0.0 &&
                    noise.uniform(step, h.cell, kOcclusionTag) < config_.occlusion_confusion)
                    y = world.truth[o];
                else
                    y = label_for(k, h.cell, noise, step);
            }
            h.label = y;
        });
        return m;
    }

    ClassId label_for(ClassId true_class, CellIndex cell, const NoiseStream& noise, std::uint64_t step) const {
        return effective_.sample(true_class, noise.uniform(step, cell, kLabelTag));
    }

private:
    static constexpr std::uint64_t kLabelTag = 0x4C41424CULL;
    static constexpr std::uint64_t kMissTag = 0x4D495353ULL;
    static constexpr std::uint64_t kOcclusionTag = 0x4F43434CULL;

    bool in_fov(double bearing, double heading) const {
        double diff = std::remainder(bearing - heading, 2.0 * std::numbers::pi);
        return std::abs(diff) * 180.0 / std::numbers::pi <= *config_.fov_deg / 2.0 + 1e-12;
    }

    SensorConfig config_;
    double resolution_;
    ConfusionMatrix effective_;
    std::vector<double> bearings_;
    std::vector<std::vector<RayOffset>> templates_;
    std::size_t free_capacity_ = 0;
};

/// Convenience form; builds the ray templates on every call.
inline Measurement sense(const GroundTruthWorld& world, RobotState x, const SensorConfig& config, const NoiseStream& noise,
                         std::uint64_t step = 0) {
    return RangeSensor(config, world.geometry.resolution).sense(world, x, noise, step);
}

}  // namespace semreach
