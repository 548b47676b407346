#pragma once
// Conformal calibration of semantic maps.
//
// A calibration scenario is scored by its worst mapping error: the largest
// 1 - p_t(m_j = true class) over every replayed path, every time step and
// every observed cell. The ceil((D+1)(1-alpha))-th smallest score is the
// threshold s_hat; at test time a cell's prediction set holds every class
// with belief at least 1 - s_hat. The heuristic baseline sets (argmax label,
// cumulative-probability prefix) live here too so all set constructors share
// one representation.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semreach/domain.hpp"
#include "semreach/mapper.hpp"
#include "semreach/rng.hpp"
#include "semreach/search.hpp"
#include "semreach/sensor.hpp"
#include "semreach/stats.hpp"

namespace semreach {

/// Set of class ids packed in a bitmask (at most 32 classes).
class ClassSet {
public:
    constexpr ClassSet() = default;
    constexpr explicit ClassSet(std::uint32_t bits) : bits_(bits) {}

    static constexpr ClassSet single(ClassId k) { return ClassSet(1u << k); }
    static constexpr ClassSet all(std::size_t n) { return ClassSet(n >= 32 ? ~0u : ((1u << n) - 1u)); }

    constexpr bool contains(ClassId k) const noexcept { return (bits_ >> k) & 1u; }
    constexpr void insert(ClassId k) noexcept { bits_ |= (1u << k); }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr int size() const noexcept { return std::popcount(bits_); }
    constexpr std::uint32_t bits() const noexcept { return bits_; }
    constexpr bool subset_of(ClassSet o) const noexcept { return (bits_ & ~o.bits_) == 0; }

    std::vector<ClassId> members() const {
        std::vector<ClassId> out;
        for (std::uint32_t b = bits_; b != 0; b &= b - 1) out.push_back(std::countr_zero(b));
        return out;
    }

    friend constexpr bool operator==(ClassSet, ClassSet) = default;

private:
    std::uint32_t bits_ = 0;
};

/// Prediction sets for observed cells; unobserved cells are implicitly {free}.
class PredictionSetMap {
public:
    PredictionSetMap() = default;
    PredictionSetMap(const GridGeometry& g, std::size_t num_classes)
        : geometry_(g), num_classes_(num_classes), sets_(g.size()), observed_(g.size(), 0) {}

    const GridGeometry& geometry() const noexcept { return geometry_; }
    std::size_t num_classes() const noexcept { return num_classes_; }

    bool observed(CellIndex j) const { return observed_.at(j) != 0; }
    std::span<const CellIndex> observed_cells() const noexcept { return observed_list_; }

    ClassSet set(CellIndex j) const { return observed(j) ? sets_[j] : ClassSet::single(kFreeClass); }

    void assign(CellIndex j, ClassSet s) {
        if (!observed_.at(j)) {
            observed_[j] = 1;
            observed_list_.push_back(j);
        }
        sets_[j] = s;
    }

    /// histogram[n] = number of observed cells whose set has n classes.
    std::vector<std::size_t> size_histogram() const {
        std::vector<std::size_t> h(num_classes_ + 1, 0);
        for (CellIndex j : observed_list_) ++h[static_cast<std::size_t>(sets_[j].size())];
        return h;
    }

    /// True iff every observed cell's set contains its true class.
    bool covers(std::span<const ClassId> truth) const {
        for (CellIndex j : observed_list_)
            if (!sets_[j].contains(truth[j])) return false;
        return true;
    }

private:
    GridGeometry geometry_{};
    std::size_t num_classes_ = 0;
    std::vector<ClassSet> sets_;
    std::vector<std::uint8_t> observed_;
    std::vector<CellIndex> observed_list_;
};

// ---------------------------------------------------------------------------
// Quantiles

/// ceil((D+1)(1-alpha)), guarded against representation error in alpha.
inline std::size_t conformal_rank(std::size_t n, double alpha) {
    const double x = static_cast<double>(n + 1) * (1.0 - alpha);
    return static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

/// k-th smallest score with k = ceil((D+1)(1-alpha)); 1.0 when k > D.
inline double conformal_quantile(std::span<const double> scores, double alpha) {
    if (scores.empty()) throw std::invalid_argument("conformal_quantile: no calibration scores");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("conformal_quantile: alpha must lie in (0, 1)");
    const std::size_t k = conformal_rank(scores.size(), alpha);
    if (k > scores.size()) return 1.0;
    std::vector<double> sorted(scores.begin(), scores.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    return sorted[k - 1];
}

/// 1 - s_hat computed from the complements 1 - s_i, so it stays exact when
/// s_hat is within rounding of 1: the k-th smallest score is the k-th largest
/// complement. Returns 0 when k > D.
inline double conformal_threshold(std::span<const double> true_probs, double alpha) {
    if (true_probs.empty()) throw std::invalid_argument("conformal_threshold: no calibration scores");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("conformal_threshold: alpha must lie in (0, 1)");
    const std::size_t k = conformal_rank(true_probs.size(), alpha);
    if (k > true_probs.size()) return 0.0;
    std::vector<double> sorted(true_probs.begin(), true_probs.end());
    const auto idx = static_cast<std::ptrdiff_t>(true_probs.size() - k);
    std::nth_element(sorted.begin(), sorted.begin() + idx, sorted.end());
    return sorted[static_cast<std::size_t>(idx)];
}

struct DatasetConditionalAlpha {
    double alpha_hat = 0.0;
    std::size_t v = 0;        // floor((D+1) alpha_hat)
    double coverage = 0.0;    // Beta^{-1}_{D+1-v, v}(delta)
};

/// Largest alpha_hat = v/(D+1) such that the delta-quantile of
/// Beta(D+1-v, v) reaches the target coverage. The quantile decreases in v,
/// so the search walks v upward until it fails.
inline DatasetConditionalAlpha dataset_conditional_alpha(std::size_t n, double delta, double target) {
    if (n < 1) throw std::invalid_argument("dataset_conditional_alpha: need at least one calibration scenario");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("dataset_conditional_alpha: delta must lie in (0, 1)");
    if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("dataset_conditional_alpha: target must lie in (0, 1)");
    const double d1 = static_cast<double>(n + 1);
    std::optional<DatasetConditionalAlpha> best;
    for (std::size_t v = 1; v <= n; ++v) {
        const double cov = stats::beta_quantile(d1 - static_cast<double>(v), static_cast<double>(v), delta);
        if (cov < target) break;
        best = DatasetConditionalAlpha{static_cast<double>(v) / d1, v, cov};
    }
    if (!best) {
        const double min_cov = stats::beta_quantile(static_cast<double>(n), 1.0, delta);
        throw std::domain_error("dataset_conditional_alpha: target coverage " + std::to_string(target) +
                                " unreachable with D=" + std::to_string(n) + "; best achievable is " +
                                std::to_string(min_cov));
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Set constructors

/// Prediction sets {k : p(k) >= threshold} on observed cells. An empty set
/// is replaced by the full class set.
inline PredictionSetMap conformalize_threshold(const BeliefMap& belief, double threshold, const SemanticClassTable& classes) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("conformalize: threshold must lie in [0, 1]");
    const std::size_t n = classes.size();
    if (belief.num_classes() != n) throw std::invalid_argument("conformalize: class count mismatch");
    PredictionSetMap out(belief.geometry(), n);
    for (CellIndex j : belief.observed_cells()) {
        const auto p = belief.pmf(j);
        ClassSet s;
        for (std::size_t k = 0; k < n; ++k)
            if (p[k] >= threshold) s.insert(static_cast<ClassId>(k));
        out.assign(j, s.empty() ? ClassSet::all(n) : s);
    }
    return out;
}

/// Prediction sets {k : p(k) >= 1 - s_hat}.
inline PredictionSetMap conformalize(const BeliefMap& belief, double s_hat, const SemanticClassTable& classes) {
    if (!(s_hat >= 0.0 && s_hat <= 1.0)) throw std::invalid_argument("conformalize: s_hat must lie in [0, 1]");
    return conformalize_threshold(belief, 1.0 - s_hat, classes);
}

inline ClassId argmax_label(std::span<const double> p) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
        if (p[k] > p[best]) best = k;
    return static_cast<ClassId>(best);
}

/// Most likely label per cell (lowest id on ties); unobserved cells are free.
inline std::vector<ClassId> ua_labels(const BeliefMap& belief) {
    std::vector<ClassId> out(belief.geometry().size(), kFreeClass);
    for (CellIndex j : belief.observed_cells()) out[j] = argmax_label(belief.pmf(j));
    return out;
}

/// The argmax labels as singleton sets.
inline PredictionSetMap ua_sets(const BeliefMap& belief) {
    PredictionSetMap out(belief.geometry(), belief.num_classes());
    for (CellIndex j : belief.observed_cells()) out.assign(j, ClassSet::single(argmax_label(belief.pmf(j))));
    return out;
}

/// Shortest most-likely-first prefix with mass >= 1 - alpha (up to 1e-12,
/// so 0.6 + 0.3 reaches 0.9).
inline ClassSet cumulative_set(std::span<const double> p, double alpha) {
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    ClassSet s;
    double mass = 0.0;
    for (std::size_t i : order) {
        s.insert(static_cast<ClassId>(i));
        mass += p[i];
        if (mass >= 1.0 - alpha - 1e-12) break;
    }
    return s;
}

/// Baseline sets that read the PMFs as calibrated probabilities.
inline PredictionSetMap ui_sets(const BeliefMap& belief, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ui_sets: alpha must lie in (0, 1)");
    PredictionSetMap out(belief.geometry(), belief.num_classes());
    for (CellIndex j : belief.observed_cells()) out.assign(j, cumulative_set(belief.pmf(j), alpha));
    return out;
}

// ---------------------------------------------------------------------------
// Nonconformity scores

/// Running max of 1 - p(true class) over observed cells. The minimum true
/// class probability is kept alongside so thresholds near 1 stay exact.
class WorstErrorTracker {
public:
    explicit WorstErrorTracker(std::span<const ClassId> truth) : truth_(truth) {}

    /// Account for the cells just updated. Cells not in `touched` keep their
    /// previous PMF, so their contribution is already in the running max.
    void observe(const BeliefMap& belief, std::span<const CellIndex> touched) {
        for (CellIndex j : touched) lowest_ = std::min(lowest_, belief.prob(j, truth_[j]));
    }

    void observe_all(const BeliefMap& belief) { observe(belief, belief.observed_cells()); }

    double worst() const noexcept { return 1.0 - lowest_; }
    double lowest_true_prob() const noexcept { return lowest_; }

private:
    std::span<const ClassId> truth_;
    double lowest_ = 1.0;
};

/// A nonconformity score with its exact complement.
struct Score {
    double value = 0.0;      // 1 - min p(true class)
    double true_prob = 1.0;  // min p(true class)
};

inline Score score_from_true_prob(double p) { return {1.0 - p, p}; }

/// Replay sense -> update along one path and return its worst mapping error.
inline Score ncs_for_path(const Scenario& scenario, std::span<const RobotState> path, const RangeSensor& sensor,
                          const MapperConfig& mapper, const NoiseStream& noise) {
    const auto& g = scenario.geometry();
    auto belief = BeliefMap::fresh(g, mapper, scenario.classes().size());
    WorstErrorTracker tracker(scenario.world.truth);
    for (std::size_t t = 0; t < path.size(); ++t) {
        if (!g.contains(path[t])) throw std::out_of_range("calibration path leaves the grid");
        const auto z = sensor.sense(scenario.world, path[t], noise, t);
        const auto touched = belief.apply(z, mapper);
        tracker.observe(belief, touched);
    }
    return score_from_true_prob(tracker.lowest_true_prob());
}

/// Scenario score: max over paths. Path i uses its own noise stream derived
/// from `noise`, so scores reflect measurement randomness across paths.
inline Score ncs_for_scenario(const Scenario& scenario, std::span<const Path> paths, const RangeSensor& sensor,
                              const MapperConfig& mapper, const NoiseStream& noise,
                              std::vector<Score>* per_path = nullptr) {
    if (paths.empty()) throw std::invalid_argument("ncs_for_scenario: no paths");
    double lowest = 1.0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (paths[i].empty() || paths[i].front() != scenario.start)
            throw std::invalid_argument("calibration path does not start at the scenario start");
        const Score s = ncs_for_path(scenario, paths[i], sensor, mapper, noise.child("calibration-path", i));
        if (per_path) per_path->push_back(s);
        lowest = std::min(lowest, s.true_prob);
    }
    return score_from_true_prob(lowest);
}

inline Score ncs_for_scenario(const Scenario& scenario, std::span<const Path> paths, const SensorConfig& sensor,
                              const MapperConfig& mapper, const NoiseStream& noise) {
    return ncs_for_scenario(scenario, paths, RangeSensor(sensor, scenario.geometry().resolution), mapper, noise);
}

/// Calibration paths: the true-label shortest safe path, then detours through
/// uniformly drawn admissible waypoints. Paths are distinct.
inline std::vector<Path> generate_calibration_paths(const Scenario& s, std::size_t count, Rng& rng) {
    if (count < 1) throw std::invalid_argument("generate_calibration_paths: count must be at least 1");
    const auto& g = s.geometry();
    const auto ok = admissible_mask(g, s.world.truth, s.classes(), g.resolution);
    const auto goals = s.task.goal_cells(g);
    auto shortest = astar(g, ok, s.start, goals);
    if (!shortest) throw std::runtime_error("scenario " + std::to_string(s.seed) + " has no feasible path in ground truth");

    std::vector<Path> paths{shortest->states};
    const auto field = dijkstra(g, ok, s.start);
    std::vector<CellIndex> waypoints;
    for (CellIndex j = 0; j < g.size(); ++j)
        if (ok[j] && field.reachable(j)) waypoints.push_back(j);

    const std::size_t budget = 50 * count;
    for (std::size_t attempt = 0; paths.size() < count && attempt < budget; ++attempt) {
        const CellIndex w = waypoints[rng.below(waypoints.size())];
        const auto first = extract_path(g, field, w);
        auto second = astar(g, ok, g.pos(w), goals);
        if (!second) continue;
        Path p = first.states;
        p.insert(p.end(), second->states.begin() + 1, second->states.end());
        if (std::find(paths.begin(), paths.end(), p) == paths.end()) paths.push_back(std::move(p));
    }
    if (paths.size() < count)
        throw std::runtime_error("scenario " + std::to_string(s.seed) + ": could not find " + std::to_string(count) +
                                 " distinct calibration paths");
    return paths;
}

// ---------------------------------------------------------------------------
// Calibration artifact

enum class CalibrationMode { marginal, dataset_conditional };

/// alpha actually fed to the quantile: alpha itself for marginal coverage,
/// the Beta-corrected alpha_hat for dataset-conditional coverage.
inline double effective_alpha(CalibrationMode mode, std::size_t n, double alpha, std::optional<double> delta) {
    if (mode == CalibrationMode::marginal) return alpha;
    if (!delta) throw std::invalid_argument("dataset-conditional calibration needs delta");
    return dataset_conditional_alpha(n, *delta, 1.0 - alpha).alpha_hat;
}

struct CalibrationArtifact {
    std::vector<double> scores;
    std::vector<double> true_probs;  // 1 - scores, kept exact
    double alpha = 0.1;
    double alpha_used = 0.1;
    double quantile = 1.0;
    double threshold = 0.0;  // 1 - quantile
    CalibrationMode mode = CalibrationMode::marginal;
    std::optional<double> delta;
    std::size_t paths_per_scenario = 0;
    std::string config_hash;
    std::uint64_t base_seed = 0;

    double alpha_for(double a) const { return effective_alpha(mode, scores.size(), a, delta); }

    /// s_hat for another target alpha under the same mode.
    double quantile_for(double a) const { return conformal_quantile(scores, alpha_for(a)); }
    double threshold_for(double a) const { return conformal_threshold(true_probs, alpha_for(a)); }

    friend bool operator==(const CalibrationArtifact&, const CalibrationArtifact&) = default;
};

inline CalibrationArtifact make_artifact(std::span<const Score> scores, double alpha, CalibrationMode mode,
                                         std::optional<double> delta) {
    CalibrationArtifact a;
    for (const auto& s : scores) {
        a.scores.push_back(s.value);
        a.true_probs.push_back(s.true_prob);
    }
    a.alpha = alpha;
    a.mode = mode;
    a.delta = mode == CalibrationMode::dataset_conditional ? delta : std::nullopt;
    a.alpha_used = a.alpha_for(alpha);
    a.quantile = conformal_quantile(a.scores, a.alpha_used);
    a.threshold = conformal_threshold(a.true_probs, a.alpha_used);
    return a;
}

}  // namespace semreach
