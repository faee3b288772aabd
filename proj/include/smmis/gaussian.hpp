#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smmis/error.hpp"

namespace smmis {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

/// Factorized (diagonal-covariance) Gaussian density.
class GaussianLeaf {
public:
    GaussianLeaf(std::vector<double> mean, std::vector<double> stddev)
        : mean_(std::move(mean)), stddev_(std::move(stddev)) {
        require(!mean_.empty(), "GaussianLeaf: dimension must be >= 1");
        require(mean_.size() == stddev_.size(), "GaussianLeaf: mean/stddev length mismatch");
        for (double s : stddev_)
            require(std::isfinite(s) && s > 0.0, "GaussianLeaf: stddev entries must be finite and > 0");
        for (double m : mean_) require(std::isfinite(m), "GaussianLeaf: mean entries must be finite");
        log_norm_ = 0.0;
        inv_stddev_.reserve(stddev_.size());
        for (double s : stddev_) {
            log_norm_ -= kHalfLog2Pi + std::log(s);
            inv_stddev_.push_back(1.0 / s);
        }
    }

    /// Isotropic leaf: same mean and stddev in every dimension.
    static GaussianLeaf isotropic(std::size_t dim, double mean, double stddev) {
        return GaussianLeaf(std::vector<double>(dim, mean), std::vector<double>(dim, stddev));
    }

    std::size_t dim() const { return mean_.size(); }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return stddev_; }
    const std::vector<double>& inv_stddev() const { return inv_stddev_; }

    /// Log normalizer summed over dimensions: -sum_i (0.5 log 2pi + log sigma_i).
    double log_normalizer() const { return log_norm_; }

    /// Log density restricted to the first `prefix.size()` coordinates.
    double prefix_logpdf(std::span<const double> prefix) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < prefix.size(); ++i) {
            const double z = (prefix[i] - mean_[i]) / stddev_[i];
            acc -= kHalfLog2Pi + std::log(stddev_[i]) + 0.5 * z * z;
        }
        return acc;
    }

    friend bool operator==(const GaussianLeaf& a, const GaussianLeaf& b) {
        return a.mean_ == b.mean_ && a.stddev_ == b.stddev_;
    }

private:
    std::vector<double> mean_;
    std::vector<double> stddev_;
    std::vector<double> inv_stddev_;
    double log_norm_ = 0.0;
};

inline double gaussian_logpdf(const GaussianLeaf& leaf, std::span<const double> x) {
    if (x.size() != leaf.dim()) [[unlikely]]
        throw InputError("gaussian_logpdf: dimension mismatch (leaf " + std::to_string(leaf.dim()) + ", x " +
                         std::to_string(x.size()) + ")");
    const double* mu = leaf.mean().data();
    const double* inv = leaf.inv_stddev().data();
    double quad = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z = (x[i] - mu[i]) * inv[i];
        quad += z * z;
    }
    return leaf.log_normalizer() - 0.5 * quad;
}

/// Scaled Gaussian produced by multiplying two leaves: a(x) b(x) = exp(log_scale) leaf(x).
struct ScaledLeaf {
    double log_scale;
    GaussianLeaf leaf;
};

inline ScaledLeaf gaussian_product(const GaussianLeaf& a, const GaussianLeaf& b) {
    require(a.dim() == b.dim(), "gaussian_product: dimension mismatch");
    const std::size_t d = a.dim();
    std::vector<double> mean(d), sd(d);
    double log_scale = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double va = a.stddev()[i] * a.stddev()[i];
        const double vb = b.stddev()[i] * b.stddev()[i];
        const double vsum = va + vb;
        const double v = va * vb / vsum;
        mean[i] = (a.mean()[i] * vb + b.mean()[i] * va) / vsum;
        sd[i] = std::sqrt(v);
        const double diff = a.mean()[i] - b.mean()[i];
        log_scale += -kHalfLog2Pi - 0.5 * std::log(vsum) - 0.5 * diff * diff / vsum;
    }
    return {log_scale, GaussianLeaf(std::move(mean), std::move(sd))};
}

/// log of the integral of a(x) b(x): the Gaussian overlap N(mu_a; mu_b, Sigma_a + Sigma_b).
inline double gaussian_overlap_log(const GaussianLeaf& a, const GaussianLeaf& b) {
    require(a.dim() == b.dim(), "gaussian_overlap_log: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double vsum = a.stddev()[i] * a.stddev()[i] + b.stddev()[i] * b.stddev()[i];
        const double diff = a.mean()[i] - b.mean()[i];
        acc += -kHalfLog2Pi - 0.5 * std::log(vsum) - 0.5 * diff * diff / vsum;
    }
    return acc;
}

/// Many leaves of one dimension stored dimension-major, so evaluating all of
/// them at a point runs a vectorizable loop over leaves for each coordinate.
class PackedLeaves {
public:
    explicit PackedLeaves(std::span<const GaussianLeaf> leaves) : n_(leaves.size()) {
        require(!leaves.empty(), "PackedLeaves: no leaves");
        dim_ = leaves.front().dim();
        mean_.resize(dim_ * n_);
        inv_.resize(dim_ * n_);
        log_norm_.resize(n_);
        for (std::size_t m = 0; m < n_; ++m) {
            require(leaves[m].dim() == dim_, "PackedLeaves: mixed dimensions");
            log_norm_[m] = leaves[m].log_normalizer();
            for (std::size_t i = 0; i < dim_; ++i) {
                mean_[i * n_ + m] = leaves[m].mean()[i];
                inv_[i * n_ + m] = leaves[m].inv_stddev()[i];
            }
        }
    }

    std::size_t size() const { return n_; }
    std::size_t dim() const { return dim_; }

    /// out[m] = log N(x; mean_m, diag stddev_m^2) for every leaf m.
    void logpdf_all(std::span<const double> x, std::span<double> out) const {
        if (x.size() != dim_) [[unlikely]]
            throw InputError("PackedLeaves: dimension mismatch");
        std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n_), 0.0);
        double* acc = out.data();
        for (std::size_t i = 0; i < dim_; ++i) {
            const double xi = x[i];
            const double* mu = &mean_[i * n_];
            const double* inv = &inv_[i * n_];
            for (std::size_t m = 0; m < n_; ++m) {
                const double z = (xi - mu[m]) * inv[m];
                acc[m] += z * z;
            }
        }
        for (std::size_t m = 0; m < n_; ++m) acc[m] = log_norm_[m] - 0.5 * acc[m];
    }

private:
    std::size_t n_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> mean_;
    std::vector<double> inv_;
    std::vector<double> log_norm_;
};

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace smmis
