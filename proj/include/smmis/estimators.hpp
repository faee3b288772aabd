#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smmis/error.hpp"
#include "smmis/mixture.hpp"
#include "smmis/parallel.hpp"
#include "smmis/rng.hpp"
#include "smmis/sampling.hpp"
#include "smmis/signed_log.hpp"

namespace smmis {

using LogDensityFn = std::function<double(std::span<const double>)>;
using SignedLogDensityFn = std::function<SignedLogValue(std::span<const double>)>;

/// Integration target p = p_tilde / Z_p. Without a known Z_p the estimators run
/// in normalizing-constant mode and use w_tilde = p_tilde / q.
struct Target {
    LogDensityFn log_unnormalized;
    std::optional<double> known_log_z;

    double log_normalized(std::span<const double> x) const {
        return log_unnormalized(x) - known_log_z.value_or(0.0);
    }

    /// p_tilde(x) is the mixture's unnormalized density; with `normalized` the
    /// mixture's own z_q is declared as Z_p.
    static Target from_smm(const SignedGaussianMixture& smm, bool normalized) {
        smm.ensure_normalizable("Target");
        auto fn = [smm](std::span<const double> x) {
            const auto v = smm.logdensity(x, Normalization::unnormalized);
            if (v.sign < 0) return kNegInf;  // roundoff below an exact zero
            return v.log_abs;
        };
        return {fn, normalized ? std::optional<double>(smm.z_q().log_abs) : std::nullopt};
    }
};

struct Integrand {
    std::function<double(std::span<const double>)> eval;
    std::string description;

    static Integrand one() {
        return {[](std::span<const double>) { return 1.0; }, "one"};
    }
    static Integrand constant(double c) {
        return {[c](std::span<const double>) { return c; }, "constant"};
    }
    static Integrand coordinate(std::size_t i) {
        return {[i](std::span<const double> x) { return x[i]; }, "x" + std::to_string(i + 1)};
    }
};

inline Integrand constant_integrand(double c) { return Integrand::constant(c); }

/// f(x) = constant + sum_m weight_m N(x; mean_m, diag stddev_m^2). Closed-form
/// expectations under Gaussian mixtures make this the integrand family of choice
/// for ground-truth experiments.
struct GaussianSum {
    std::vector<double> weights;
    std::vector<GaussianLeaf> leaves;
    double constant = 0.0;

    std::size_t dim() const { return leaves.empty() ? 0 : leaves.front().dim(); }

    double operator()(std::span<const double> x) const {
        auto& logs = detail::scratch(leaves.size());
        for (std::size_t m = 0; m < leaves.size(); ++m)
            logs[m] = (weights[m] == 0.0 ? kNegInf : std::log(std::abs(weights[m]))) + gaussian_logpdf(leaves[m], x);
        const auto v = signed_logsumexp(
            leaves.size(), [&](std::size_t m) { return weights[m] > 0 ? 1 : (weights[m] < 0 ? -1 : 0); },
            [&](std::size_t m) { return logs[m]; });
        return constant + v.to_double();
    }

    /// Integrand backed by a packed evaluator; computes the same sum as operator().
    Integrand as_integrand() const {
        std::vector<double> log_w(weights.size());
        std::vector<int> sign(weights.size());
        for (std::size_t m = 0; m < weights.size(); ++m) {
            sign[m] = weights[m] > 0 ? 1 : (weights[m] < 0 ? -1 : 0);
            log_w[m] = weights[m] == 0.0 ? kNegInf : std::log(std::abs(weights[m]));
        }
        if (leaves.empty()) return constant_integrand(constant);
        auto fn = [packed = PackedLeaves(leaves), log_w = std::move(log_w), sign = std::move(sign),
                   c = constant](std::span<const double> x) {
            auto& logs = detail::scratch(packed.size());
            packed.logpdf_all(x, logs);
            for (std::size_t m = 0; m < packed.size(); ++m) logs[m] += log_w[m];
            const auto v = signed_logsumexp(
                packed.size(), [&](std::size_t m) { return sign[m]; }, [&](std::size_t m) { return logs[m]; });
            return c + v.to_double();
        };
        return {std::move(fn), "gaussian_sum[" + std::to_string(leaves.size()) + "]"};
    }
};

struct SafeComponent {
    GaussianLeaf leaf;
    double alpha;          // weight of the safe leaf in the normalized mixed density
    double nominal_alpha;  // alpha as requested
};

/// How alpha mixes the safe leaf with the SMM. `normalized` forms
/// (1-alpha) q_SMM / Z_q + alpha q_safe; `unnormalized` forms (1-alpha) q_SMM + alpha q_safe
/// with the squared mixture's own mass Z_q and renormalizes, so the safe leaf
/// carries alpha / (alpha + (1-alpha) Z_q).
enum class SafeMixing { normalized, unnormalized };

inline std::string_view to_string(SafeMixing m) {
    return m == SafeMixing::normalized ? "normalized" : "unnormalized";
}

inline SafeMixing parse_safe_mixing(std::string_view s) {
    if (s == "normalized") return SafeMixing::normalized;
    if (s == "unnormalized") return SafeMixing::unnormalized;
    throw InputError("unknown safe mixing mode '" + std::string(s) + "'");
}

/// Importance proposal with its difference form precomputed. With a safe
/// component, `smm` is the normalized mixture (1-a) q_SMM + a q_safe and
/// `bare` keeps the SMM's own difference form for the split allocation mode.
struct Proposal {
    SignedGaussianMixture smm;
    DifferenceForm diff;
    std::optional<SafeComponent> safe;
    std::optional<DifferenceForm> bare;

    static Proposal from_smm(const SignedGaussianMixture& smm) {
        return {smm, difference_form(smm), std::nullopt, std::nullopt};
    }

    SignedLogValue logdensity(std::span<const double> x) const { return smm.logdensity(x); }
};

inline Proposal with_safe(const SignedGaussianMixture& smm, const GaussianLeaf& safe_leaf, double alpha,
                          SafeMixing mixing = SafeMixing::normalized) {
    require(alpha > 0.0 && alpha < 1.0, "with_safe: alpha must lie in (0, 1)");
    require(safe_leaf.dim() == smm.dim(), "with_safe: safe leaf dimension mismatch");
    smm.ensure_normalizable("with_safe");
    double a = alpha;
    if (mixing == SafeMixing::unnormalized) {
        // alpha / (alpha + (1-alpha) Z_q) with Z_q in log form
        a = 1.0 / (1.0 + std::exp(std::log1p(-alpha) + smm.z_q().log_abs - std::log(alpha)));
        require(a > 0.0 && a < 1.0, "with_safe: effective safe weight underflows");
    }
    const double log_keep = std::log1p(-a) - smm.z_q().log_abs;
    std::vector<Component> mixed;
    mixed.reserve(smm.size() + 1);
    for (const auto& c : smm.components()) mixed.push_back({c.coeff, c.log_scale + log_keep, c.leaf});
    mixed.push_back({a, 0.0, safe_leaf});
    SignedGaussianMixture m(std::move(mixed));
    return {m, difference_form(m), SafeComponent{safe_leaf, a, alpha}, difference_form(smm)};
}

enum class BudgetScheme { proportional, equal, safe_split };

inline std::string_view to_string(BudgetScheme s) {
    switch (s) {
        case BudgetScheme::proportional: return "proportional";
        case BudgetScheme::equal: return "equal";
        case BudgetScheme::safe_split: return "safe_split";
    }
    return "?";
}

inline BudgetScheme parse_budget_scheme(std::string_view s) {
    if (s == "proportional") return BudgetScheme::proportional;
    if (s == "equal") return BudgetScheme::equal;
    if (s == "safe_split" || s == "safe-split") return BudgetScheme::safe_split;
    throw InputError("unknown budget scheme '" + std::string(s) + "'");
}

struct BudgetPlan {
    std::size_t total = 0;
    std::size_t s_plus = 0;
    std::size_t s_minus = 0;
    BudgetScheme scheme = BudgetScheme::proportional;
    /// Samples reserved for the safe component under the split scheme.
    std::size_t s_safe = 0;
};

namespace detail {
// Split `total` between two masses given in log form; the leftover of the two floors goes to the positive part.
inline BudgetPlan split_budget(double log_z_plus, double log_z_minus, std::size_t total, BudgetScheme scheme) {
    BudgetPlan plan{total, total, 0, scheme, 0};
    if (log_z_minus == kNegInf) return plan;
    if (scheme == BudgetScheme::equal) {
        plan.s_plus = plan.s_minus = total / 2;
    } else {
        const double minus_share = 1.0 / (1.0 + std::exp(log_z_plus - log_z_minus));
        plan.s_minus = static_cast<std::size_t>(std::floor(minus_share * static_cast<double>(total)));
        plan.s_plus = total - plan.s_minus;
    }
    if (plan.s_plus == 0 || plan.s_minus == 0)
        throw StarvedBudgetError("allocate_budget: budget " + std::to_string(total) + " leaves a part without samples (" +
                                 std::to_string(plan.s_plus) + ", " + std::to_string(plan.s_minus) + ")");
    return plan;
}
}  // namespace detail

inline BudgetPlan allocate_budget(double z_plus, double z_minus, std::size_t total, BudgetScheme scheme) {
    require(z_plus > 0.0 && z_minus >= 0.0, "allocate_budget: need z_plus > 0 and z_minus >= 0");
    require(scheme != BudgetScheme::safe_split, "allocate_budget: safe split needs a proposal");
    if (total == 0) throw StarvedBudgetError("allocate_budget: empty budget");
    return detail::split_budget(std::log(z_plus), z_minus > 0 ? std::log(z_minus) : kNegInf, total, scheme);
}

/// Budget for a proposal. The safe split reserves floor(alpha S) samples for the
/// safe leaf and splits floor((1-alpha) S) proportionally over the bare SMM parts.
inline BudgetPlan allocate_budget(const Proposal& proposal, std::size_t total, BudgetScheme scheme) {
    if (total == 0) throw StarvedBudgetError("allocate_budget: empty budget");
    if (scheme != BudgetScheme::safe_split)
        return detail::split_budget(proposal.diff.log_z_plus, proposal.diff.log_z_minus, total, scheme);
    require(proposal.safe.has_value(), "allocate_budget: safe split requires a safe component");
    const double alpha = proposal.safe->alpha;
    const auto s_safe = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(total)));
    const auto s_smm = static_cast<std::size_t>(std::floor((1.0 - alpha) * static_cast<double>(total)));
    if (s_safe == 0) throw StarvedBudgetError("allocate_budget: floor(alpha S) = 0 safe samples");
    auto plan = detail::split_budget(proposal.bare->log_z_plus, proposal.bare->log_z_minus, s_smm,
                                     BudgetScheme::proportional);
    plan.total = total;
    plan.scheme = BudgetScheme::safe_split;
    plan.s_safe = s_safe;
    return plan;
}

struct Estimate {
    double value = 0.0;
    BudgetPlan budget;
    double wall_time_s = 0.0;
    double max_log_weight = kNegInf;
    /// Samples at which the full proposal density evaluated to zero.
    std::size_t zero_denominator = 0;
    std::string method;
    std::uint64_t seed = 0;

    bool flagged() const { return zero_denominator > 0; }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct WeightedSums {
    double log_shift = kNegInf;
    std::vector<double> per_stratum;  // sum of f * exp(log w - shift)
    std::vector<std::size_t> counts;
    std::size_t zero_denominator = 0;
};

template <class LogQ>
WeightedSums weigh_batch(const Target& target, const Integrand& f, const SampleBatch& batch, std::size_t n_strata,
                         LogQ&& log_q) {
    const std::size_t n = batch.size();
    WeightedSums out;
    out.per_stratum.assign(n_strata, 0.0);
    out.counts.assign(n_strata, 0);
    std::vector<double> logw(n), fv(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto x = batch.row(s);
        const SignedLogValue q = log_q(x);
        const double lp = target.log_normalized(x);
        if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
            throw InputError("estimator: target log-density is not finite at a sample");
        fv[s] = f.eval(x);
        if (!std::isfinite(fv[s])) throw InputError("estimator: integrand is not finite at a sample");
        if (q.sign <= 0) {
            ++out.zero_denominator;
            logw[s] = kNegInf;
            continue;
        }
        logw[s] = lp - q.log_abs;
        out.log_shift = std::max(out.log_shift, logw[s]);
    }
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t k = batch.strata ? (*batch.strata)[s] : 0;
        ++out.counts[k];
        if (logw[s] == kNegInf || out.log_shift == kNegInf) continue;
        out.per_stratum[k] += fv[s] * std::exp(logw[s] - out.log_shift);
    }
    return out;
}

struct Part {
    const AdditiveMixture* mix;
    double log_coef;
    int sign;
    std::size_t n;
};

/// Estimate of E_part[f w]. Stratified batches use the stratum-weighted mean
/// over the strata that received samples; ancestral batches the plain mean.
inline double part_mean(const WeightedSums& ws, const AdditiveMixture& mix, SampleMethod method) {
    if (ws.log_shift == kNegInf) return 0.0;
    double acc = 0.0;
    if (method == SampleMethod::stratified) {
        double wsum = 0.0;
        for (std::size_t k = 0; k < mix.size(); ++k) {
            if (ws.counts[k] == 0) continue;
            acc += mix.weights()[k] * ws.per_stratum[k] / static_cast<double>(ws.counts[k]);
            wsum += mix.weights()[k];
        }
        acc /= wsum;
    } else {
        std::size_t n = 0;
        for (std::size_t k = 0; k < mix.size(); ++k) {
            acc += ws.per_stratum[k];
            n += ws.counts[k];
        }
        acc /= static_cast<double>(n);
    }
    return acc * std::exp(ws.log_shift);
}

}  // namespace detail

inline std::string delta_ex_name(SampleMethod sampler) {
    return sampler == SampleMethod::stratified ? "dExS" : "dExA";
}

/// Difference-of-expectations estimator: samples q+ and q- separately and weights
/// every sample by p / q with the full signed proposal in the denominator.
inline Estimate delta_ex(const Target& target, const Integrand& f, const Proposal& proposal, const BudgetPlan& budget,
                         SampleMethod sampler, RngStream& rng) {
    require(sampler == SampleMethod::ancestral || sampler == SampleMethod::stratified,
            "delta_ex: sampler must be ancestral or stratified");
    const auto t0 = detail::Clock::now();

    std::vector<AdditiveMixture> safe_holder;
    std::vector<detail::Part> parts;
    if (budget.scheme == BudgetScheme::safe_split) {
        require(proposal.safe && proposal.bare, "delta_ex: safe split requires a safe component");
        const auto& bare = *proposal.bare;
        const double log_keep = std::log1p(-proposal.safe->alpha);
        parts.push_back({&bare.positive, log_keep + bare.log_z_plus - bare.log_z_q, 1, budget.s_plus});
        if (bare.negative)
            parts.push_back({&*bare.negative, log_keep + bare.log_z_minus - bare.log_z_q, -1, budget.s_minus});
        safe_holder.emplace_back(std::vector<double>{1.0}, std::vector<GaussianLeaf>{proposal.safe->leaf});
        parts.push_back({&safe_holder.front(), std::log(proposal.safe->alpha), 1, budget.s_safe});
    } else {
        const auto& df = proposal.diff;
        parts.push_back({&df.positive, df.log_z_plus - df.log_z_q, 1, budget.s_plus});
        if (df.negative) parts.push_back({&*df.negative, df.log_z_minus - df.log_z_q, -1, budget.s_minus});
        else if (budget.s_minus != 0) throw InputError("delta_ex: budget assigns samples to an empty negative part");
    }

    Estimate est;
    est.budget = budget;
    est.method = delta_ex_name(sampler);
    est.seed = rng.seed();
    double value = 0.0;
    for (const auto& part : parts) {
        if (part.n == 0) throw StarvedBudgetError("delta_ex: a part of the difference form has no samples");
        const auto batch = sample_additive(*part.mix, part.n, sampler, rng);
        const auto ws = detail::weigh_batch(target, f, batch, part.mix->size(),
                                            [&](std::span<const double> x) { return proposal.logdensity(x); });
        est.zero_denominator += ws.zero_denominator;
        est.max_log_weight = std::max(est.max_log_weight, ws.log_shift);
        value += part.sign * std::exp(part.log_coef) * detail::part_mean(ws, *part.mix, sampler);
    }
    est.value = est.flagged() ? std::numeric_limits<double>::quiet_NaN() : value;
    est.wall_time_s = detail::seconds_since(t0);
    return est;
}

/// Runs `replications` independent delta_ex estimates; replication r uses the
/// stream derive_seed(master_seed, {r}), so results do not depend on scheduling.
inline std::vector<Estimate> replicate_delta_ex(const Target& target, const Integrand& f, const Proposal& proposal,
                                                const BudgetPlan& budget, SampleMethod sampler,
                                                std::uint64_t master_seed, std::size_t replications,
                                                std::size_t threads = default_thread_count()) {
    std::vector<Estimate> out(replications);
    parallel_for(
        replications,
        [&](std::size_t r) {
            RngStream rng(derive_seed(master_seed, {r}));
            out[r] = delta_ex(target, f, proposal, budget, sampler, rng);
        },
        threads);
    return out;
}

/// Unnormalized IS: (1/S) sum w f with w = p / q over a batch drawn from q.
inline Estimate uis_estimate(const Target& target, const Integrand& f, const SampleBatch& batch,
                             const SignedLogDensityFn& q) {
    require(!batch.empty(), "uis_estimate: empty batch");
    const auto t0 = detail::Clock::now();
    SampleBatch flat = batch;
    flat.strata.reset();
    const auto ws = detail::weigh_batch(target, f, flat, 1, q);
    Estimate est;
    est.budget = {batch.size(), batch.size(), 0, BudgetScheme::proportional, 0};
    est.method = "uis";
    est.seed = batch.seed;
    est.zero_denominator = ws.zero_denominator;
    est.max_log_weight = ws.log_shift;
    const double v = ws.log_shift == kNegInf
                         ? 0.0
                         : ws.per_stratum[0] / static_cast<double>(batch.size()) * std::exp(ws.log_shift);
    est.value = est.flagged() ? std::numeric_limits<double>::quiet_NaN() : v;
    est.wall_time_s = detail::seconds_since(t0);
    return est;
}

inline Estimate uis_estimate(const Target& target, const Integrand& f, const SampleBatch& batch,
                             const SignedGaussianMixture& q) {
    return uis_estimate(target, f, batch, [&q](std::span<const double> x) { return q.logdensity(x); });
}

/// Plain Monte Carlo mean of f over samples of p (UIS with q = p, unit weights).
inline Estimate mc_estimate(const Integrand& f, const SampleBatch& batch) {
    require(!batch.empty(), "mc_estimate: empty batch");
    const auto t0 = detail::Clock::now();
    double acc = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) acc += f.eval(batch.row(s));
    Estimate est;
    est.value = acc / static_cast<double>(batch.size());
    est.budget = {batch.size(), batch.size(), 0, BudgetScheme::proportional, 0};
    est.method = "mc";
    est.seed = batch.seed;
    est.max_log_weight = 0.0;
    est.wall_time_s = detail::seconds_since(t0);
    return est;
}

/// Self-normalized IS over w_tilde = p_tilde / q. Any known Z_p is ignored.
inline Estimate snis_estimate(const Target& target, const Integrand& f, const SampleBatch& batch,
                              const SignedLogDensityFn& q) {
    require(!batch.empty(), "snis_estimate: empty batch");
    const auto t0 = detail::Clock::now();
    const Target unnormalized{target.log_unnormalized, std::nullopt};
    SampleBatch flat = batch;
    flat.strata.reset();
    const auto ws = detail::weigh_batch(unnormalized, f, flat, 1, q);
    const auto ones = detail::weigh_batch(unnormalized, Integrand::one(), flat, 1, q);
    Estimate est;
    est.budget = {batch.size(), batch.size(), 0, BudgetScheme::proportional, 0};
    est.method = "snis";
    est.seed = batch.seed;
    est.zero_denominator = ws.zero_denominator;
    est.max_log_weight = ws.log_shift;
    if (est.flagged()) {
        est.value = std::numeric_limits<double>::quiet_NaN();
    } else {
        if (ones.log_shift == kNegInf || ones.per_stratum[0] <= 0.0)
            throw DegenerateEstimateError("snis_estimate: all importance weights are zero");
        est.value = ws.per_stratum[0] / ones.per_stratum[0];
    }
    est.wall_time_s = detail::seconds_since(t0);
    return est;
}

inline Estimate snis_estimate(const Target& target, const Integrand& f, const SampleBatch& batch,
                              const SignedGaussianMixture& q) {
    return snis_estimate(target, f, batch, [&q](std::span<const double> x) { return q.logdensity(x); });
}

struct ReplicationStats {
    double mean = 0.0;
    double variance = 0.0;  // unbiased, across replications
    double cov = 0.0;       // sqrt(variance) / true_I
    double mean_log_abs_err = 0.0;
    double standard_error = 0.0;
    std::size_t n = 0;
};

inline ReplicationStats replication_stats(std::span<const double> values, double true_i) {
    if (values.size() < 2) throw DegenerateEstimateError("replication_stats: need at least 2 estimates");
    ReplicationStats st;
    st.n = values.size();
    for (double v : values) st.mean += v;
    st.mean /= static_cast<double>(st.n);
    double ss = 0.0, log_err = 0.0;
    for (double v : values) {
        ss += (v - st.mean) * (v - st.mean);
        log_err += std::log(std::abs(v - true_i));
    }
    st.variance = ss / static_cast<double>(st.n - 1);
    st.standard_error = std::sqrt(st.variance / static_cast<double>(st.n));
    st.cov = true_i != 0.0 ? std::sqrt(st.variance) / true_i : std::numeric_limits<double>::quiet_NaN();
    st.mean_log_abs_err = log_err / static_cast<double>(st.n);
    return st;
}

inline ReplicationStats replication_stats(std::span<const Estimate> estimates, double true_i) {
    std::vector<double> v;
    v.reserve(estimates.size());
    for (const auto& e : estimates) v.push_back(e.value);
    return replication_stats(v, true_i);
}

}  // namespace smmis
