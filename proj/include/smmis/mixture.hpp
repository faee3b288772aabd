#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smmis/error.hpp"
#include "smmis/gaussian.hpp"
#include "smmis/signed_log.hpp"

namespace smmis {

/// One term alpha_k * exp(log_scale_k) * leaf_k(x) of a signed mixture.
struct Component {
    double coeff;
    double log_scale;
    GaussianLeaf leaf;

    /// The effective signed weight alpha_k * exp(log_scale_k) in log form.
    SignedLogValue weight() const {
        if (coeff == 0.0) return SignedLogValue::zero();
        return {coeff > 0 ? 1 : -1, std::log(std::abs(coeff)) + log_scale};
    }
};

namespace detail {
inline std::vector<double>& scratch(std::size_t n) {
    thread_local std::vector<double> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}
}  // namespace detail

enum class Normalization { normalized, unnormalized };

/// Subtractive mixture: real, possibly negative coefficients over diagonal
/// Gaussian leaves. Immutable once built. The normalizing constant is cached
/// but not required to be positive, so invalid models can still be loaded and
/// diagnosed.
class SignedGaussianMixture {
public:
    /// Components whose weight is below 1e-300 relative to the largest weight are pruned.
    explicit SignedGaussianMixture(std::vector<Component> components) {
        require(!components.empty(), "SignedGaussianMixture: at least one component required");
        dim_ = components.front().leaf.dim();
        double max_log = kNegInf;
        for (const auto& c : components) {
            require(c.leaf.dim() == dim_, "SignedGaussianMixture: all leaves must share one dimension");
            require(std::isfinite(c.coeff) && std::isfinite(c.log_scale),
                    "SignedGaussianMixture: coefficients and scales must be finite");
            const auto w = c.weight();
            if (!w.is_zero()) max_log = std::max(max_log, w.log_abs);
        }
        require(max_log > kNegInf, "SignedGaussianMixture: all coefficients are zero");
        const double prune_below = max_log + std::log(1e-300);
        for (auto& c : components) {
            const auto w = c.weight();
            if (!w.is_zero() && w.log_abs >= prune_below) components_.push_back(std::move(c));
        }
        for (const auto& c : components_) {
            const auto w = c.weight();
            signs_.push_back(w.sign);
            log_weights_.push_back(w.log_abs);
        }
        z_q_ = signed_logsumexp(
            components_.size(), [&](std::size_t i) { return signs_[i]; }, [&](std::size_t i) { return log_weights_[i]; });
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return components_.size(); }
    const std::vector<Component>& components() const { return components_; }
    const Component& operator[](std::size_t k) const { return components_[k]; }
    /// log |alpha_k exp(log_scale_k)| and its sign, cached per component.
    double log_weight(std::size_t k) const { return log_weights_[k]; }
    int sign(std::size_t k) const { return signs_[k]; }

    /// Signed normalizing constant sum_k alpha_k exp(log_scale_k); leaves integrate to one.
    SignedLogValue z_q() const { return z_q_; }
    bool is_normalizable() const { return z_q_.is_positive() && std::isfinite(z_q_.log_abs); }

    SignedLogValue logdensity(std::span<const double> x, Normalization mode = Normalization::normalized) const {
        require(x.size() == dim_, "smm_logdensity: dimension mismatch");
        auto& logs = detail::scratch(components_.size());
        for (std::size_t k = 0; k < components_.size(); ++k)
            logs[k] = log_weights_[k] + gaussian_logpdf(components_[k].leaf, x);
        auto v = signed_logsumexp(
            components_.size(), [&](std::size_t k) { return signs_[k]; }, [&](std::size_t k) { return logs[k]; });
        if (mode == Normalization::normalized) {
            if (!is_normalizable())
                throw DegenerateModelError("smm_logdensity: normalized evaluation needs z_q > 0");
            v = v / z_q_;
        }
        return v;
    }

    void ensure_normalizable(const std::string& where) const {
        if (!is_normalizable())
            throw DegenerateModelError(where + ": normalizing constant is not strictly positive and finite");
    }

private:
    std::vector<Component> components_;
    std::vector<int> signs_;
    std::vector<double> log_weights_;
    std::size_t dim_ = 0;
    SignedLogValue z_q_;
};

inline SignedLogValue normalizing_constant(const SignedGaussianMixture& smm) { return smm.z_q(); }

inline SignedLogValue smm_logdensity(const SignedGaussianMixture& smm, std::span<const double> x,
                                     Normalization mode = Normalization::normalized) {
    return smm.logdensity(x, mode);
}

/// Squares a signed mixture into K(K+1)/2 product components; cross terms carry 2 alpha_k alpha_k'.
inline SignedGaussianMixture square_smm(const SignedGaussianMixture& base) {
    const auto& cs = base.components();
    std::vector<Component> out;
    out.reserve(cs.size() * (cs.size() + 1) / 2);
    for (std::size_t k = 0; k < cs.size(); ++k) {
        for (std::size_t j = k; j < cs.size(); ++j) {
            auto prod = gaussian_product(cs[k].leaf, cs[j].leaf);
            const double mult = (k == j) ? 1.0 : 2.0;
            out.push_back({mult * cs[k].coeff * cs[j].coeff, cs[k].log_scale + cs[j].log_scale + prod.log_scale,
                           std::move(prod.leaf)});
        }
    }
    SignedGaussianMixture sq(std::move(out));
    if (!sq.is_normalizable())
        throw DegenerateModelError("square_smm: squared mixture has non-positive or non-finite z_q");
    return sq;
}

/// Flattens several (squared) mixtures into one sum-of-squares mixture.
inline SignedGaussianMixture sum_of_squares(std::span<const SignedGaussianMixture> parts) {
    require(!parts.empty(), "sum_of_squares: need at least one mixture");
    std::vector<Component> all;
    for (const auto& p : parts) all.insert(all.end(), p.components().begin(), p.components().end());
    return SignedGaussianMixture(std::move(all));
}

/// Convex combination of normalized Gaussian leaves.
class AdditiveMixture {
public:
    AdditiveMixture(std::vector<double> weights, std::vector<GaussianLeaf> leaves)
        : weights_(std::move(weights)), leaves_(std::move(leaves)) {
        require(!leaves_.empty(), "AdditiveMixture: at least one component required");
        require(weights_.size() == leaves_.size(), "AdditiveMixture: weights/leaves length mismatch");
        double total = 0.0;
        for (double w : weights_) {
            require(std::isfinite(w) && w >= 0.0, "AdditiveMixture: weights must be finite and >= 0");
            total += w;
        }
        require(std::abs(total - 1.0) <= 1e-12, "AdditiveMixture: weights must sum to 1");
        for (const auto& l : leaves_) require(l.dim() == leaves_.front().dim(), "AdditiveMixture: dim mismatch");
        log_weights_.reserve(weights_.size());
        for (double w : weights_) log_weights_.push_back(w > 0 ? std::log(w) : kNegInf);
    }

    std::size_t dim() const { return leaves_.front().dim(); }
    std::size_t size() const { return leaves_.size(); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& log_weights() const { return log_weights_; }
    const std::vector<GaussianLeaf>& leaves() const { return leaves_; }

    double logpdf(std::span<const double> x) const {
        auto& logs = detail::scratch(leaves_.size());
        for (std::size_t k = 0; k < leaves_.size(); ++k) logs[k] = log_weights_[k] + gaussian_logpdf(leaves_[k], x);
        return logsumexp(std::span<const double>(logs.data(), leaves_.size()));
    }

private:
    std::vector<double> weights_;
    std::vector<double> log_weights_;
    std::vector<GaussianLeaf> leaves_;
};

/// q = (Z+ q+ - Z- q-) / Zq with q+ and q- additive mixtures. Masses are kept in
/// log form; high-dimensional squared mixtures have masses far below 1e-300.
struct DifferenceForm {
    AdditiveMixture positive;
    std::optional<AdditiveMixture> negative;
    double log_z_plus;
    double log_z_minus;  // -inf when the negative part is empty
    double log_z_q;
    /// Indices into the source mixture's component list, per part.
    std::vector<std::size_t> positive_source;
    std::vector<std::size_t> negative_source;

    double z_plus() const { return std::exp(log_z_plus); }
    double z_minus() const { return std::exp(log_z_minus); }
    double z_q() const { return std::exp(log_z_q); }
    /// Z+/Zq and Z-/Zq, which stay O(1) even when the masses underflow.
    double plus_ratio() const { return std::exp(log_z_plus - log_z_q); }
    double minus_ratio() const { return std::exp(log_z_minus - log_z_q); }
    bool has_negative() const { return negative.has_value(); }

    /// (Z+ q+(x) - Z- q-(x)) / Zq in signed log form.
    SignedLogValue reconstruct_logdensity(std::span<const double> x) const {
        const SignedLogValue plus{1, log_z_plus + positive.logpdf(x)};
        SignedLogValue v = plus;
        if (negative) v = plus - SignedLogValue{1, log_z_minus + negative->logpdf(x)};
        return v / SignedLogValue{1, log_z_q};
    }
};

inline DifferenceForm difference_form(const SignedGaussianMixture& smm) {
    smm.ensure_normalizable("difference_form");
    std::vector<double> plus_logs, minus_logs;
    std::vector<GaussianLeaf> plus_leaves, minus_leaves;
    std::vector<std::size_t> plus_idx, minus_idx;
    for (std::size_t k = 0; k < smm.size(); ++k) {
        const auto& c = smm[k];
        const auto w = c.weight();
        if (w.is_zero()) continue;
        if (w.sign > 0) {
            plus_logs.push_back(w.log_abs);
            plus_leaves.push_back(c.leaf);
            plus_idx.push_back(k);
        } else {
            minus_logs.push_back(w.log_abs);
            minus_leaves.push_back(c.leaf);
            minus_idx.push_back(k);
        }
    }
    if (plus_logs.empty()) throw DegenerateModelError("difference_form: no positive components");

    auto normalize = [](const std::vector<double>& logs, double log_total) {
        std::vector<double> w(logs.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < logs.size(); ++i) sum += (w[i] = std::exp(logs[i] - log_total));
        for (double& x : w) x /= sum;  // absorb roundoff so weights sum to 1
        return w;
    };
    const double lz_plus = logsumexp(plus_logs);
    const double lz_minus = minus_logs.empty() ? kNegInf : logsumexp(minus_logs);
    DifferenceForm df{AdditiveMixture(normalize(plus_logs, lz_plus), std::move(plus_leaves)),
                      std::nullopt,
                      lz_plus,
                      lz_minus,
                      smm.z_q().log_abs,
                      std::move(plus_idx),
                      std::move(minus_idx)};
    if (!minus_logs.empty()) df.negative.emplace(normalize(minus_logs, lz_minus), std::move(minus_leaves));
    return df;
}

}  // namespace smmis
