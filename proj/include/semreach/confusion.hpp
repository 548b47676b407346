#pragma once
// Row-stochastic confusion matrices: entry (k, y) is the probability that an
// object of true class k is reported with label y.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semreach/domain.hpp"

namespace semreach {

class ConfusionMatrix {
public:
    ConfusionMatrix() = default;

    ConfusionMatrix(std::size_t n, std::vector<double> row_major) : n_(n), data_(std::move(row_major)) {
        if (data_.size() != n_ * n_) throw std::invalid_argument("confusion matrix must be square");
    }

    static ConfusionMatrix identity(std::size_t n) {
        std::vector<double> d(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
        return {n, std::move(d)};
    }

    /// Diagonal `diag`, remaining mass spread evenly over the other labels.
    static ConfusionMatrix uniform_off_diagonal(std::size_t n, double diag) {
        std::vector<double> d(n * n, (1.0 - diag) / static_cast<double>(n - 1));
        for (std::size_t i = 0; i < n; ++i) d[i * n + i] = diag;
        return {n, std::move(d)};
    }

    std::size_t size() const noexcept { return n_; }
    double at(ClassId k, ClassId y) const { return data_.at(static_cast<std::size_t>(k) * n_ + static_cast<std::size_t>(y)); }
    std::span<const double> row(ClassId k) const {
        return std::span<const double>(data_).subspan(static_cast<std::size_t>(k) * n_, n_);
    }
    const std::vector<double>& data() const noexcept { return data_; }

    void validate(double tol = 1e-9) const {
        if (n_ == 0) throw std::invalid_argument("confusion matrix is empty");
        for (std::size_t k = 0; k < n_; ++k) {
            double sum = 0.0;
            for (std::size_t y = 0; y < n_; ++y) {
                const double v = data_[k * n_ + y];
                if (!(v >= 0.0)) throw std::invalid_argument("confusion matrix has a negative entry in row " + std::to_string(k));
                sum += v;
            }
            if (std::abs(sum - 1.0) > tol) throw std::invalid_argument("confusion matrix row " + std::to_string(k) + " does not sum to 1");
        }
    }

    /// (1 - s) * this + s * uniform.
    ConfusionMatrix blended_toward_uniform(double s) const {
        if (s < 0.0 || s > 1.0) throw std::invalid_argument("severity scale must lie in [0, 1]");
        if (s == 0.0) return *this;
        std::vector<double> d(data_.size());
        const double u = 1.0 / static_cast<double>(n_);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = (1.0 - s) * data_[i] + s * u;
        return {n_, std::move(d)};
    }

    /// Inverse-CDF draw from row k using a uniform variate in [0, 1).
    ClassId sample(ClassId k, double u) const {
        const auto r = row(k);
        double acc = 0.0;
        for (std::size_t y = 0; y < n_; ++y) {
            acc += r[y];
            if (u < acc) return static_cast<ClassId>(y);
        }
        for (std::size_t y = n_; y-- > 0;)
            if (r[y] > 0.0) return static_cast<ClassId>(y);
        return k;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

}  // namespace semreach
