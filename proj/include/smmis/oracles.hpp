#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "smmis/error.hpp"
#include "smmis/estimators.hpp"
#include "smmis/gaussian.hpp"
#include "smmis/mixture.hpp"
#include "smmis/sampling.hpp"
#include "smmis/signed_log.hpp"

// Ground-truth machinery. Nothing here draws samples from the objects it checks;
// every value is either closed-form or brute-force deterministic.

namespace smmis {

/// E_p[f] in signed log form for a Gaussian-sum integrand, via pairwise Gaussian overlaps.
inline SignedLogValue exact_mixture_expectation_log(const SignedGaussianMixture& p, const GaussianSum& f) {
    p.ensure_normalizable("exact_mixture_expectation");
    require(f.leaves.empty() || f.dim() == p.dim(), "exact_mixture_expectation: dimension mismatch");
    require(f.weights.size() == f.leaves.size(), "exact_mixture_expectation: weights/leaves length mismatch");
    std::vector<SignedLogValue> terms;
    terms.reserve(p.size() * f.leaves.size() + 1);
    for (const auto& c : p.components()) {
        const auto a = c.weight();
        for (std::size_t m = 0; m < f.leaves.size(); ++m) {
            const auto b = SignedLogValue::from_double(f.weights[m]);
            terms.push_back(a * b * SignedLogValue{1, gaussian_overlap_log(c.leaf, f.leaves[m])});
        }
    }
    auto v = signed_logsumexp(terms) / p.z_q();
    if (f.constant != 0.0) v = v + SignedLogValue::from_double(f.constant);
    return v;
}

inline double exact_mixture_expectation(const SignedGaussianMixture& p, const GaussianSum& f) {
    return exact_mixture_expectation_log(p, f).to_double();
}

using Box = std::vector<std::pair<double, double>>;

inline Box default_box(std::size_t dim) { return Box(dim, {-8.0, 8.0}); }
inline constexpr std::size_t kDefaultQuadraturePoints = 2049;

/// Box covering every leaf of `smm` out to `n_sigma` standard deviations.
inline Box covering_box(const SignedGaussianMixture& smm, double n_sigma = 12.0) {
    Box box(smm.dim(), {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (const auto& c : smm.components())
        for (std::size_t i = 0; i < smm.dim(); ++i) {
            box[i].first = std::min(box[i].first, c.leaf.mean()[i] - n_sigma * c.leaf.stddev()[i]);
            box[i].second = std::max(box[i].second, c.leaf.mean()[i] + n_sigma * c.leaf.stddev()[i]);
        }
    return box;
}

/// Tensor-grid trapezoidal integral of exp(density_log) over a 1-D or 2-D box.
inline double quadrature(const std::function<double(std::span<const double>)>& density_log, const Box& box,
                         std::size_t points_per_dim = kDefaultQuadraturePoints) {
    require(box.size() == 1 || box.size() == 2, "quadrature: only d <= 2 is supported");
    require(points_per_dim >= 129, "quadrature: need at least 129 points per dimension");
    const std::size_t n = points_per_dim;
    auto node = [&](std::size_t dim, std::size_t j) {
        const auto [lo, hi] = box[dim];
        return lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n - 1);
    };
    auto endpoint_weight = [&](std::size_t j) { return (j == 0 || j == n - 1) ? 0.5 : 1.0; };
    auto value = [&](std::span<const double> x) {
        const double l = density_log(x);
        if (std::isnan(l) || l == std::numeric_limits<double>::infinity())
            throw InputError("quadrature: non-finite density value on the grid");
        return std::exp(l);
    };
    double acc = 0.0;
    double x[2];
    if (box.size() == 1) {
        for (std::size_t j = 0; j < n; ++j) {
            x[0] = node(0, j);
            acc += endpoint_weight(j) * value({x, 1});
        }
        return acc * (box[0].second - box[0].first) / static_cast<double>(n - 1);
    }
    for (std::size_t j = 0; j < n; ++j) {
        x[0] = node(0, j);
        double row = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
            x[1] = node(1, l);
            row += endpoint_weight(l) * value({x, 2});
        }
        acc += endpoint_weight(j) * row;
    }
    const double h0 = (box[0].second - box[0].first) / static_cast<double>(n - 1);
    const double h1 = (box[1].second - box[1].first) / static_cast<double>(n - 1);
    return acc * h0 * h1;
}

/// Log-density adaptor for a signed mixture; negative roundoff reads as zero density.
inline std::function<double(std::span<const double>)> as_log_density(const SignedGaussianMixture& smm,
                                                                     Normalization mode = Normalization::normalized) {
    return [&smm, mode](std::span<const double> x) {
        const auto v = smm.logdensity(x, mode);
        return v.sign > 0 ? v.log_abs : kNegInf;
    };
}

struct KlEstimate {
    double value = 0.0;
    std::size_t q_zero = 0;  // samples where q vanished; each contributes +inf
    bool flagged() const { return q_zero > 0; }
};

/// Monte Carlo KL(p || q) = E_p[log p - log q] over a batch drawn from p.
inline KlEstimate kl_estimate(const SampleBatch& p_batch, const std::function<double(std::span<const double>)>& p_log,
                              const std::function<double(std::span<const double>)>& q_log) {
    require(!p_batch.empty(), "kl_estimate: empty batch");
    KlEstimate out;
    double acc = 0.0;
    for (std::size_t s = 0; s < p_batch.size(); ++s) {
        const auto x = p_batch.row(s);
        const double lq = q_log(x);
        if (lq == kNegInf) {
            ++out.q_zero;
            continue;
        }
        acc += p_log(x) - lq;
    }
    out.value = out.flagged() ? std::numeric_limits<double>::infinity() : acc / static_cast<double>(p_batch.size());
    return out;
}

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
    require(!samples.empty(), "ks_statistic: need at least one sample");
    std::vector<double> xs(samples.begin(), samples.end());
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
    }
    return d;
}

/// Analytic marginal CDF of coordinate `dim_index` of a normalized signed mixture:
/// sum_k alpha_k exp(log_scale_k) Phi_k / Zq. Other coordinates integrate out to one.
inline double marginal_cdf(const SignedGaussianMixture& smm, std::size_t dim_index, double x) {
    smm.ensure_normalizable("marginal_cdf");
    require(dim_index < smm.dim(), "marginal_cdf: dimension index out of range");
    double acc = 0.0;
    for (const auto& c : smm.components()) {
        const auto w = c.weight();
        acc += w.sign * std::exp(w.log_abs - smm.z_q().log_abs) *
               std_normal_cdf((x - c.leaf.mean()[dim_index]) / c.leaf.stddev()[dim_index]);
    }
    return std::clamp(acc, 0.0, 1.0);
}

/// Column `dim_index` of a batch.
inline std::vector<double> batch_column(const SampleBatch& b, std::size_t dim_index) {
    std::vector<double> col(b.size());
    for (std::size_t s = 0; s < b.size(); ++s) col[s] = b.row(s)[dim_index];
    return col;
}

// Reference densities for optimal proposals. Unnormalized; for tests only.

/// |f(x)| p(x), the variance-minimizing UIS proposal up to normalization.
inline double optimal_uis_proposal(const Integrand& f, const Target& p, std::span<const double> x) {
    return std::abs(f.eval(x)) * std::exp(p.log_normalized(x));
}

/// |p(x) f(x) - I p(x)|, the asymptotically optimal SNIS proposal up to normalization.
inline double optimal_snis_proposal(const Integrand& f, const Target& p, double true_i, std::span<const double> x) {
    return std::abs(f.eval(x) - true_i) * std::exp(p.log_normalized(x));
}

}  // namespace smmis
