#pragma once
// Per-cell categorical Bayes filter over semantic classes.
//
// The map factorizes over cells. Every ray that crosses a cell before its hit
// contributes one free-space Bayes factor. Semantic returns are fused once per
// distinct (cell, label) pair in a scan, since all rays landing on a cell in
// one scan share a single segmentation. Factors come from the mapper's
// assumed confusion matrix, which is generally not the sensor's true one.
// Cells no ray touched keep their PMF bit-for-bit.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "semreach/confusion.hpp"
#include "semreach/domain.hpp"
#include "semreach/sensor.hpp"

namespace semreach {

struct MapperConfig {
    ConfusionMatrix assumed_confusion;
    std::vector<double> prior;  // empty means uniform
    double pmf_floor = 1e-50;

    void validate(const SemanticClassTable& classes) const {
        assumed_confusion.validate();
        if (assumed_confusion.size() != classes.size())
            throw std::invalid_argument("assumed confusion size does not match the class table");
        if (!prior.empty()) {
            if (prior.size() != classes.size()) throw std::invalid_argument("prior length does not match the class table");
            double s = 0.0;
            for (double p : prior) {
                if (!(p >= 0.0)) throw std::invalid_argument("prior has a negative entry");
                s += p;
            }
            if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("prior does not sum to 1");
        }
        if (!(pmf_floor > 0.0 && pmf_floor < 1.0 / static_cast<double>(classes.size())))
            throw std::invalid_argument("pmf_floor must lie in (0, 1/num_classes)");
    }

    std::vector<double> prior_or_uniform(std::size_t n) const {
        if (!prior.empty()) return prior;
        return std::vector<double>(n, 1.0 / static_cast<double>(n));
    }
};

class BeliefMap {
public:
    BeliefMap() = default;

    BeliefMap(const GridGeometry& geometry, std::span<const double> prior)
        : geometry_(geometry), classes_(prior.size()), observed_flag_(geometry.size(), 0) {
        geometry_.validate();
        if (classes_ == 0) throw std::invalid_argument("prior is empty");
        pmf_.reserve(geometry_.size() * classes_);
        for (std::size_t j = 0; j < geometry_.size(); ++j) pmf_.insert(pmf_.end(), prior.begin(), prior.end());
    }

    static BeliefMap fresh(const GridGeometry& geometry, const MapperConfig& cfg, std::size_t num_classes) {
        const auto p = cfg.prior_or_uniform(num_classes);
        return BeliefMap(geometry, p);
    }

    const GridGeometry& geometry() const noexcept { return geometry_; }
    std::size_t num_classes() const noexcept { return classes_; }

    std::span<const double> pmf(CellIndex j) const {
        if (j >= geometry_.size()) throw std::out_of_range("cell index outside the map");
        return std::span<const double>(pmf_).subspan(j * classes_, classes_);
    }
    double prob(CellIndex j, ClassId k) const { return pmf(j)[static_cast<std::size_t>(k)]; }

    bool observed(CellIndex j) const { return observed_flag_.at(j) != 0; }
    /// J_t in first-observed order.
    std::span<const CellIndex> observed_cells() const noexcept { return observed_list_; }

    /// Fuse one scan in place. Returns the cells whose PMF was updated, in
    /// first-touch order.
    std::vector<CellIndex> apply(const Measurement& z, const MapperConfig& cfg) {
        if (z.width() != geometry_.width || z.height() != geometry_.height)
            throw std::invalid_argument("measurement grid does not match the belief map");
        const auto& A = cfg.assumed_confusion;
        if (A.size() != classes_) throw std::invalid_argument("assumed confusion size does not match the belief map");

        std::vector<std::uint32_t> labels(geometry_.size(), 0);
        std::vector<std::uint32_t> free_rays(geometry_.size(), 0);
        std::vector<CellIndex> touched;
        auto check = [&](CellIndex j) {
            if (j >= geometry_.size()) throw std::out_of_range("measurement cell outside the map");
            if (labels[j] == 0 && free_rays[j] == 0) touched.push_back(j);
        };
        auto note = [&](const RayHit& h) {
            if (h.label < 0 || static_cast<std::size_t>(h.label) >= classes_)
                throw std::out_of_range("measurement label out of range");
            check(h.cell);
            labels[h.cell] |= (1u << h.label);
        };
        for (const auto& ray : z.rays()) {
            for (CellIndex j : z.traversed_free(ray)) {
                check(j);
                ++free_rays[j];
            }
            if (ray.hit) note(*ray.hit);
            for (const auto& h : z.occluded(ray)) note(h);
        }

        std::vector<double> columns(classes_ * classes_);
        for (std::size_t y = 0; y < classes_; ++y)
            for (std::size_t k = 0; k < classes_; ++k)
                columns[y * classes_ + k] = A.at(static_cast<ClassId>(k), static_cast<ClassId>(y));
        for (CellIndex j : touched) {
            double* p = pmf_.data() + j * classes_;
            const double* free_col = columns.data() + static_cast<std::size_t>(kFreeClass) * classes_;
            for (std::uint32_t r = 0; r < free_rays[j]; ++r)
                if (!bayes_step(p, free_col, cfg.pmf_floor)) break;  // fixed point: later rays change nothing
            for (std::size_t y = 0; y < classes_; ++y)
                if (labels[j] & (1u << y)) bayes_step(p, columns.data() + y * classes_, cfg.pmf_floor);
            if (!observed_flag_[j]) {
                observed_flag_[j] = 1;
                observed_list_.push_back(j);
            }
        }
        return touched;
    }

    /// Single-label Bayes step on one cell (exposed for tests and replay).
    void observe(CellIndex j, ClassId y, const MapperConfig& cfg) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes_) throw std::out_of_range("label out of range");
        if (j >= geometry_.size()) throw std::out_of_range("cell index outside the map");
        std::vector<double> col(classes_);
        for (std::size_t k = 0; k < classes_; ++k) col[k] = cfg.assumed_confusion.at(static_cast<ClassId>(k), y);
        bayes_step(pmf_.data() + j * classes_, col.data(), cfg.pmf_floor);
        if (!observed_flag_[j]) {
            observed_flag_[j] = 1;
            observed_list_.push_back(j);
        }
    }

private:
    // Floor the current PMF (so no class is ever absorbed at zero), multiply by
    // the likelihood column, renormalize. Returns whether anything changed.
    bool bayes_step(double* p, const double* likelihood, double floor) const {
        double next[32];
        double sum = 0.0;
        for (std::size_t k = 0; k < classes_; ++k) {
            next[k] = (p[k] < floor ? floor : p[k]) * likelihood[k];
            sum += next[k];
        }
        if (!(sum > 0.0)) throw std::domain_error("label has zero likelihood under the assumed sensor model");
        bool changed = false;
        for (std::size_t k = 0; k < classes_; ++k) {
            const double v = next[k] / sum;
            changed = changed || v != p[k];
            p[k] = v;
        }
        return changed;
    }

    GridGeometry geometry_{};
    std::size_t classes_ = 0;
    std::vector<double> pmf_;
    std::vector<std::uint8_t> observed_flag_;
    std::vector<CellIndex> observed_list_;
};

/// Value-semantics form of BeliefMap::apply.
inline BeliefMap update(BeliefMap belief, const Measurement& z, const MapperConfig& cfg) {
    belief.apply(z, cfg);
    return belief;
}

}  // namespace semreach
