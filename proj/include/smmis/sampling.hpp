#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smmis/error.hpp"
#include "smmis/gaussian.hpp"
#include "smmis/mixture.hpp"
#include "smmis/rng.hpp"

namespace smmis {

enum class SampleMethod { ancestral, stratified, arits };

inline std::string_view to_string(SampleMethod m) {
    switch (m) {
        case SampleMethod::ancestral: return "ancestral";
        case SampleMethod::stratified: return "stratified";
        case SampleMethod::arits: return "arits";
    }
    return "?";
}

inline SampleMethod parse_sample_method(std::string_view s) {
    if (s == "ancestral") return SampleMethod::ancestral;
    if (s == "stratified") return SampleMethod::stratified;
    if (s == "arits") return SampleMethod::arits;
    throw InputError("unknown sample method '" + std::string(s) + "'");
}

/// Row-major S x d sample matrix with provenance.
struct SampleBatch {
    std::size_t dim = 0;
    std::vector<double> data;
    std::optional<std::vector<std::size_t>> strata;
    std::uint64_t seed = 0;
    SampleMethod method = SampleMethod::ancestral;

    std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
    bool empty() const { return data.empty(); }
    std::span<const double> row(std::size_t s) const { return {data.data() + s * dim, dim}; }
    std::span<double> row(std::size_t s) { return {data.data() + s * dim, dim}; }
};

inline void draw_leaf(const GaussianLeaf& leaf, RngStream& rng, std::span<double> out) {
    for (std::size_t i = 0; i < leaf.dim(); ++i) out[i] = leaf.mean()[i] + leaf.stddev()[i] * rng.normal();
}

/// Per-component counts: floor(w_k n) plus one extra for the r components with
/// the largest fractional parts (ties to the lowest index). Sums to n exactly.
inline std::vector<std::size_t> stratified_counts(std::span<const double> weights, std::size_t n) {
    std::vector<std::size_t> counts(weights.size());
    std::vector<double> frac(weights.size());
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        const double target = weights[k] * static_cast<double>(n);
        const double fl = std::floor(target);
        counts[k] = static_cast<std::size_t>(fl);
        frac[k] = target - fl;
        assigned += counts[k];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[order[r % order.size()]];
    return counts;
}

inline void check_sampling_weights(const AdditiveMixture& mix) {
    double total = 0.0;
    for (double w : mix.weights()) total += w;
    require(std::abs(total - 1.0) <= 1e-12, "sampler: mixture weights must sum to 1");
}

inline SampleBatch ancestral_sample(const AdditiveMixture& mix, std::size_t n, RngStream& rng) {
    check_sampling_weights(mix);
    SampleBatch b{mix.dim(), std::vector<double>(n * mix.dim()), std::vector<std::size_t>(n), rng.seed(),
                  SampleMethod::ancestral};
    std::vector<double> cdf(mix.size());
    std::partial_sum(mix.weights().begin(), mix.weights().end(), cdf.begin());
    for (std::size_t s = 0; s < n; ++s) {
        const double u = rng.uniform() * cdf.back();
        auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        k = std::min(k, mix.size() - 1);
        while (mix.weights()[k] == 0.0 && k > 0) --k;  // never land on an empty stratum
        (*b.strata)[s] = k;
        draw_leaf(mix.leaves()[k], rng, b.row(s));
    }
    return b;
}

/// Deterministic per-component counts from stratified_counts; rows grouped by component.
inline SampleBatch stratified_sample(const AdditiveMixture& mix, std::size_t n, RngStream& rng) {
    check_sampling_weights(mix);
    const auto counts = stratified_counts(mix.weights(), n);
    SampleBatch b{mix.dim(), std::vector<double>(n * mix.dim()), std::vector<std::size_t>(n), rng.seed(),
                  SampleMethod::stratified};
    std::size_t s = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        for (std::size_t c = 0; c < counts[k]; ++c, ++s) {
            (*b.strata)[s] = k;
            draw_leaf(mix.leaves()[k], rng, b.row(s));
        }
    }
    return b;
}

inline SampleBatch sample_additive(const AdditiveMixture& mix, std::size_t n, SampleMethod method, RngStream& rng) {
    switch (method) {
        case SampleMethod::ancestral: return ancestral_sample(mix, n, rng);
        case SampleMethod::stratified: return stratified_sample(mix, n, rng);
        case SampleMethod::arits: break;
    }
    throw InputError("sample_additive: ARITS applies to signed mixtures, not additive ones");
}

// ---------------------------------------------------------------------------
// Autoregressive inverse transform sampling

struct AritsConfig {
    double lower_bound = -100.0;
    double upper_bound = 100.0;
    double tolerance = 1e-6;
    bool boundary_check = true;
    /// Stop updating a lane once its bracket is below tolerance. When false every
    /// lane is bisected until the slowest one converges.
    bool skip_converged = true;

    void validate() const {
        require(lower_bound < upper_bound, "AritsConfig: lower_bound must be < upper_bound");
        require(tolerance > 0.0, "AritsConfig: tolerance must be > 0");
    }
};

inline constexpr double kBoundaryTolerance = 1e-9;

/// Conditional weights c_k = alpha_k exp(log_scale_k) prod_{j<i} N(prefix_j), shifted
/// by a common factor so the largest |c_k| is 1. The shift cancels in every ratio.
struct PrefixWeights {
    std::vector<double> weights;
    double evidence = 0.0;       // sum_k c_k in the shifted scale
    double log_shift = kNegInf;  // log of the common factor
    SignedLogValue log_evidence() const {
        return SignedLogValue::from_double(evidence) * SignedLogValue{1, log_shift};
    }
};

inline PrefixWeights prefix_weights(const SignedGaussianMixture& smm, std::span<const double> prefix) {
    require(prefix.size() < smm.dim(), "conditional_cdf: prefix must be shorter than the model dimension");
    PrefixWeights pw;
    pw.weights.resize(smm.size());
    std::vector<double> logs(smm.size());
    for (std::size_t k = 0; k < smm.size(); ++k) {
        logs[k] = smm[k].weight().log_abs + smm[k].leaf.prefix_logpdf(prefix);
        pw.log_shift = std::max(pw.log_shift, logs[k]);
    }
    double abs_sum = 0.0;
    for (std::size_t k = 0; k < smm.size(); ++k) {
        const double c = std::exp(logs[k] - pw.log_shift);
        pw.weights[k] = smm[k].coeff > 0 ? c : -c;
        pw.evidence += pw.weights[k];
        abs_sum += c;
    }
    if (pw.evidence <= cancellation_tolerance(smm.size()) * abs_sum) pw.evidence = 0.0;
    return pw;
}

/// Evidence of an observed prefix: the unnormalized marginal density of x_{<i}.
inline SignedLogValue prefix_evidence(const SignedGaussianMixture& smm, std::span<const double> prefix) {
    return prefix_weights(smm, prefix).log_evidence();
}

/// P(x_i <= m | x_{<i} = prefix) under the mixture, where i = prefix.size().
/// `evidence` is the value returned by prefix_evidence for the same prefix.
inline double conditional_cdf(const SignedGaussianMixture& smm, std::span<const double> prefix, double m,
                              SignedLogValue evidence) {
    if (!evidence.is_positive())
        throw ZeroEvidenceError("conditional_cdf: prefix lies where the mixture marginal is zero");
    const auto pw = prefix_weights(smm, prefix);
    if (pw.evidence <= 0.0)
        throw ZeroEvidenceError("conditional_cdf: prefix lies where the mixture marginal is zero");
    // Rescale the shifted weights to the caller's evidence so the ratio uses it verbatim.
    const double scale = std::exp(pw.log_shift - evidence.log_abs);
    double acc = 0.0;
    for (std::size_t k = 0; k < smm.size(); ++k) {
        const auto& leaf = smm[k].leaf;
        acc += pw.weights[k] * scale *
               std_normal_cdf((m - leaf.mean()[prefix.size()]) / leaf.stddev()[prefix.size()]);
    }
    return std::clamp(acc, 0.0, 1.0);
}

/// Inverts conditional CDFs dimension by dimension for pre-drawn uniforms.
/// `uniforms` is dimension-major: uniforms[i * n + s] drives sample s, dimension i.
inline SampleBatch arits_invert(const SignedGaussianMixture& smm, std::span<const double> uniforms, std::size_t n,
                                const AritsConfig& cfg) {
    cfg.validate();
    smm.ensure_normalizable("arits_sample");
    const std::size_t d = smm.dim();
    require(uniforms.size() == n * d, "arits_invert: need n * d uniforms");
    SampleBatch b{d, std::vector<double>(n * d), std::nullopt, 0, SampleMethod::arits};
    const std::size_t K = smm.size();

    // Per-sample running log prefix weights, sample-major.
    std::vector<double> log_prefix(n * K);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < K; ++k) log_prefix[s * K + k] = smm[k].weight().log_abs;

    std::vector<double> lo(n), hi(n), w(K), mu(K), inv_sd(K);
    std::vector<char> active(n);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            mu[k] = smm[k].leaf.mean()[i];
            inv_sd[k] = 1.0 / smm[k].leaf.stddev()[i];
        }
        std::fill(lo.begin(), lo.end(), cfg.lower_bound);
        std::fill(hi.begin(), hi.end(), cfg.upper_bound);
        std::fill(active.begin(), active.end(), 1);

        // Evidence of the prefix observed so far, once per sample for this dimension.
        std::vector<double> shifted(n * K), evidence(n);
        for (std::size_t s = 0; s < n; ++s) {
            const double* lp = &log_prefix[s * K];
            const double shift = *std::max_element(lp, lp + K);
            double e = 0.0, abs_sum = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                const double c = std::exp(lp[k] - shift);
                shifted[s * K + k] = smm[k].coeff > 0 ? c : -c;
                e += shifted[s * K + k];
                abs_sum += c;
            }
            if (!(e > cancellation_tolerance(K) * abs_sum))
                throw ZeroEvidenceError("arits_sample: zero evidence at dimension " + std::to_string(i + 1) +
                                        " (prefix in a zero-density valley)");
            evidence[s] = e;
        }
        auto cdf = [&](std::size_t s, double m) {
            double acc = 0.0;
            const double* c = &shifted[s * K];
            for (std::size_t k = 0; k < K; ++k) acc += c[k] * std_normal_cdf((m - mu[k]) * inv_sd[k]);
            return std::clamp(acc / evidence[s], 0.0, 1.0);
        };
        if (cfg.boundary_check) {
            for (std::size_t s = 0; s < n; ++s) {
                const double c_lo = cdf(s, cfg.lower_bound);
                const double c_hi = cdf(s, cfg.upper_bound);
                if (c_lo > kBoundaryTolerance || c_hi < 1.0 - kBoundaryTolerance)
                    throw BracketError("arits_sample: bracket [" + std::to_string(cfg.lower_bound) + ", " +
                                       std::to_string(cfg.upper_bound) + "] gives CDF (" + std::to_string(c_lo) +
                                       ", " + std::to_string(c_hi) + ") at dimension " + std::to_string(i + 1));
            }
        }

        const double* u = uniforms.data() + i * n;
        bool any_open = true;
        while (any_open) {
            any_open = false;
            for (std::size_t s = 0; s < n; ++s) {
                if (cfg.skip_converged && !active[s]) continue;
                const double mid = lo[s] + (hi[s] - lo[s]) / 2;
                if (cdf(s, mid) > u[s])
                    hi[s] = mid;
                else
                    lo[s] = mid;
                active[s] = (hi[s] - lo[s]) > cfg.tolerance;
                any_open = any_open || active[s];
            }
        }
        for (std::size_t s = 0; s < n; ++s) {
            const double x = lo[s] + (hi[s] - lo[s]) / 2;
            b.data[s * d + i] = x;
            for (std::size_t k = 0; k < K; ++k) {
                const double z = (x - mu[k]) * inv_sd[k];
                log_prefix[s * K + k] += -kHalfLog2Pi + std::log(inv_sd[k]) - 0.5 * z * z;
            }
        }
    }
    return b;
}

/// Draws n samples from a normalized signed mixture. Uniforms are drawn once per
/// (sample, dimension), dimension-major, before any bisection starts.
inline SampleBatch arits_sample(const SignedGaussianMixture& smm, std::size_t n, const AritsConfig& cfg,
                                RngStream& rng) {
    std::vector<double> u(n * smm.dim());
    for (double& x : u) x = rng.uniform();
    auto b = arits_invert(smm, u, n, cfg);
    b.seed = rng.seed();
    return b;
}

}  // namespace smmis
