#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "smmis/error.hpp"
#include "smmis/estimators.hpp"
#include "smmis/io.hpp"
#include "smmis/mixture.hpp"
#include "smmis/oracles.hpp"
#include "smmis/parallel.hpp"
#include "smmis/rng.hpp"
#include "smmis/sampling.hpp"

namespace smmis {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Random model construction

/// Squared random SMM: means ~ N(0,1), stddevs ~ U(2,3), coefficients ~ U(-1,1),
/// redrawn until the squared mixture has at least one negative coefficient.
inline SignedGaussianMixture init_random_target(std::size_t d, std::size_t K, RngStream& rng,
                                                std::size_t max_tries = 1000) {
    require(d >= 1 && K >= 1, "init_random_target: d and K must be >= 1");
    for (std::size_t attempt = 0; attempt < max_tries; ++attempt) {
        std::vector<Component> comps;
        comps.reserve(K);
        for (std::size_t k = 0; k < K; ++k) {
            const double coeff = rng.uniform(-1.0, 1.0);
            std::vector<double> mean(d), sd(d);
            for (auto& m : mean) m = rng.normal();
            for (auto& s : sd) s = rng.uniform(2.0, 3.0);
            comps.push_back({coeff, 0.0, GaussianLeaf(std::move(mean), std::move(sd))});
        }
        try {
            auto sq = square_smm(SignedGaussianMixture(std::move(comps)));
            const bool has_negative = std::any_of(sq.components().begin(), sq.components().end(),
                                                  [](const Component& c) { return c.coeff < 0; });
            if (has_negative) return sq;
        } catch (const DegenerateModelError&) {
        }
    }
    throw InitFailureError("init_random_target: no model with a negative squared component after " +
                           std::to_string(max_tries) + " tries (d=" + std::to_string(d) + ", K=" + std::to_string(K) + ")");
}

/// f(x) = sum of 100 Gaussian densities: means ~ N(0,1), stddevs ~ U(1,2), weights ~ U(1e4, 1e5).
inline GaussianSum init_integrand(std::size_t d, RngStream& rng, std::size_t n_components = 100) {
    require(d >= 1, "init_integrand: d must be >= 1");
    GaussianSum f;
    for (std::size_t m = 0; m < n_components; ++m) {
        std::vector<double> mean(d), sd(d);
        for (auto& v : mean) v = rng.normal();
        for (auto& s : sd) s = rng.uniform(1.0, 2.0);
        f.leaves.emplace_back(std::move(mean), std::move(sd));
        f.weights.push_back(rng.uniform(10000.0, 100000.0));
    }
    return f;
}

/// sigma <- sigma * exp(epsilon * Z), one independent Z ~ N(0,1) per leaf and dimension.
inline SignedGaussianMixture perturb_stddevs(const SignedGaussianMixture& base, double epsilon, RngStream& rng) {
    require(epsilon >= 0.0, "perturb_stddevs: epsilon must be >= 0");
    std::vector<Component> out;
    out.reserve(base.size());
    for (const auto& c : base.components()) {
        std::vector<double> sd = c.leaf.stddev();
        for (auto& s : sd) s *= std::exp(epsilon * rng.normal());
        out.push_back({c.coeff, c.log_scale, GaussianLeaf(c.leaf.mean(), std::move(sd))});
    }
    return SignedGaussianMixture(std::move(out));
}

/// Pre-squaring mixture of the two-dimensional normalizing-constant targets:
/// alpha_1 N(0, 0.6^2 I) + alpha_2 N(0, I), alpha = (0.12, -0.36) or (0.16, -0.36).
inline SignedGaussianMixture rq2_base_mixture(int target_id) {
    require(target_id == 1 || target_id == 2, "rq2 target_id must be 1 or 2");
    const double a1 = target_id == 1 ? 0.12 : 0.16;
    return SignedGaussianMixture({{a1, 0.0, GaussianLeaf::isotropic(2, 0.0, 0.6)},
                                  {-0.36, 0.0, GaussianLeaf::isotropic(2, 0.0, 1.0)}});
}

inline SignedGaussianMixture rq2_target(int target_id) { return square_smm(rq2_base_mixture(target_id)); }

// ---------------------------------------------------------------------------
// Configs

struct Rq1Config {
    std::vector<std::size_t> dims{16, 32, 64};
    std::vector<std::size_t> components_K{2, 4, 6};
    std::vector<std::size_t> budgets_deltaex{10000, 100000, 300000};
    std::size_t budget_arits = 10000;
    std::size_t n_inits = 30;
    std::uint64_t master_seed = 0;
    bool include_ancestral = false;
    bool include_equal_split = false;
    AritsConfig arits;
    std::size_t threads = 1;

    void validate() const {
        require(budget_arits > 0 && n_inits > 0, "rq1 config: counts must be positive");
        for (auto v : dims) require(v > 0, "rq1 config: dims must be positive");
        for (auto v : components_K) require(v > 0, "rq1 config: components_K must be positive");
        for (auto v : budgets_deltaex) require(v > 0, "rq1 config: budgets must be positive");
        require(threads > 0, "rq1 config: threads must be positive");
        arits.validate();
    }
};

struct Rq2Config {
    int target_id = 1;
    std::vector<double> epsilons{0.01, 0.05};
    std::vector<bool> safe_modes{false};
    double safe_sigma = 3.0;
    double safe_alpha = 0.001;
    SafeMixing safe_mixing = SafeMixing::normalized;
    std::size_t S = 15000;
    std::size_t replications = 100;
    std::size_t kl_samples = 200000;
    std::uint64_t master_seed = 0;
    SampleMethod sampler = SampleMethod::stratified;
    BudgetScheme scheme = BudgetScheme::proportional;
    AritsConfig arits;
    std::size_t threads = default_thread_count();

    void validate() const {
        require(target_id == 1 || target_id == 2, "rq2 config: target_id must be 1 or 2");
        require(S > 0 && replications > 0 && kl_samples > 0, "rq2 config: counts must be positive");
        for (double e : epsilons) require(e >= 0.0 && std::isfinite(e), "rq2 config: epsilon must be >= 0");
        require(!safe_modes.empty(), "rq2 config: safe_enabled must list at least one mode");
        require(safe_sigma > 0.0, "rq2 config: safe_sigma must be > 0");
        require(safe_alpha > 0.0 && safe_alpha < 1.0, "rq2 config: safe_alpha must lie in (0, 1)");
        require(sampler != SampleMethod::arits, "rq2 config: sampler must be ancestral or stratified");
        require(threads > 0, "rq2 config: threads must be positive");
        arits.validate();
    }
};

namespace detail {
inline AritsConfig arits_from_json(const json& j, AritsConfig a) {
    a.lower_bound = j.value("lower_bound", a.lower_bound);
    a.upper_bound = j.value("upper_bound", a.upper_bound);
    a.tolerance = j.value("tolerance", a.tolerance);
    a.boundary_check = j.value("boundary_check", a.boundary_check);
    a.skip_converged = j.value("skip_converged", a.skip_converged);
    return a;
}
inline json arits_to_json(const AritsConfig& a) {
    return {{"lower_bound", a.lower_bound},
            {"upper_bound", a.upper_bound},
            {"tolerance", a.tolerance},
            {"boundary_check", a.boundary_check},
            {"skip_converged", a.skip_converged}};
}
}  // namespace detail

inline Rq1Config rq1_config_from_json(const json& j) {
    try {
        Rq1Config c;
        c.dims = j.value("dims", c.dims);
        c.components_K = j.value("components_K", c.components_K);
        c.budgets_deltaex = j.value("budgets_deltaex", c.budgets_deltaex);
        c.budget_arits = j.value("budget_arits", c.budget_arits);
        c.n_inits = j.value("n_inits", c.n_inits);
        c.master_seed = j.value("master_seed", c.master_seed);
        c.include_ancestral = j.value("include_ancestral", c.include_ancestral);
        c.include_equal_split = j.value("include_equal_split", c.include_equal_split);
        c.threads = j.value("threads", c.threads);
        if (j.contains("arits")) c.arits = detail::arits_from_json(j.at("arits"), c.arits);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw InputError(std::string("rq1 config: ") + e.what());
    }
}

inline Rq2Config rq2_config_from_json(const json& j) {
    try {
        Rq2Config c;
        c.target_id = j.value("target_id", c.target_id);
        c.epsilons = j.value("epsilons", c.epsilons);
        if (j.contains("safe_enabled")) {
            const auto& s = j.at("safe_enabled");
            c.safe_modes = s.is_array() ? s.get<std::vector<bool>>() : std::vector<bool>{s.get<bool>()};
        }
        c.safe_sigma = j.value("safe_sigma", c.safe_sigma);
        c.safe_alpha = j.value("safe_alpha", c.safe_alpha);
        if (j.contains("safe_mixing")) c.safe_mixing = parse_safe_mixing(j.at("safe_mixing").get<std::string>());
        c.S = j.value("S", c.S);
        c.replications = j.value("replications", c.replications);
        c.kl_samples = j.value("kl_samples", c.kl_samples);
        c.master_seed = j.value("master_seed", c.master_seed);
        if (j.contains("sampler")) c.sampler = parse_sample_method(j.at("sampler").get<std::string>());
        if (j.contains("scheme")) c.scheme = parse_budget_scheme(j.at("scheme").get<std::string>());
        c.threads = j.value("threads", c.threads);
        if (j.contains("arits")) c.arits = detail::arits_from_json(j.at("arits"), c.arits);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw InputError(std::string("rq2 config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Records

/// One row of a sweep CSV. Optional numeric fields print as empty cells.
struct Record {
    std::string experiment;
    std::size_t d = 0;
    std::size_t K = 0;
    std::size_t S = 0;
    std::string method;
    std::string scheme;
    std::uint64_t seed = 0;
    double value = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> true_i_log;
    std::optional<double> log_abs_err;
    std::optional<double> cov;
    std::optional<double> kl_hat;
    double time_s = 0.0;       // sampling + weighting only
    double time_incl_s = 0.0;  // including model and proposal construction
    std::string flag;
    std::optional<double> epsilon;
    std::optional<bool> safe;
    std::optional<std::size_t> init;
};

inline constexpr const char* kSweepCsvHeader =
    "experiment,d,K,S,method,scheme,seed,value,true_I_log,log_abs_err,cov,kl_hat,time_s,flag,time_incl_s,epsilon,safe,"
    "init";

/// Columns holding wall-clock measurements; excluded from determinism comparisons.
inline constexpr std::size_t kSweepTimeColumns[] = {12, 14};

inline std::string sweep_csv(std::span<const Record> rows) {
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    std::ostringstream os;
    os << kSweepCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.experiment << ',' << r.d << ',' << r.K << ',' << r.S << ',' << r.method << ',' << r.scheme << ','
           << r.seed << ',' << format_double(r.value) << ',' << opt(r.true_i_log) << ',' << opt(r.log_abs_err) << ','
           << opt(r.cov) << ',' << opt(r.kl_hat) << ',' << format_double(r.time_s) << ',' << r.flag << ','
           << format_double(r.time_incl_s) << ',' << opt(r.epsilon) << ','
           << (r.safe ? (*r.safe ? "1" : "0") : "") << ',' << (r.init ? std::to_string(*r.init) : "") << '\n';
    }
    return os.str();
}

/// Drops the wall-clock columns of a sweep CSV so two runs can be compared byte-for-byte.
inline std::string strip_time_columns(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        std::size_t col = 0, start = 0;
        std::string kept;
        while (true) {
            const auto comma = line.find(',', start);
            const auto cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (std::find(std::begin(kSweepTimeColumns), std::end(kSweepTimeColumns), col) ==
                std::end(kSweepTimeColumns))
                kept += cell + ',';
            if (comma == std::string::npos) break;
            start = comma + 1;
            ++col;
        }
        out << kept << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// RQ1: delta-ex versus ARITS in a plain Monte Carlo setting

namespace detail {
inline double log_abs_error(double value, const SignedLogValue& truth) {
    return (SignedLogValue::from_double(value) - truth).log_abs;
}
}  // namespace detail

/// Runs every (d, K, init) cell of the sweep. Each cell derives its seed from
/// (master_seed, d, K, init); cells may run in parallel without changing results.
inline std::vector<Record> run_rq1(const Rq1Config& cfg) {
    cfg.validate();
    struct Cell {
        std::size_t d, K, init;
    };
    std::vector<Cell> cells;
    for (auto d : cfg.dims)
        for (auto K : cfg.components_K)
            for (std::size_t i = 0; i < cfg.n_inits; ++i) cells.push_back({d, K, i});

    std::vector<std::vector<Record>> per_cell(cells.size());
    parallel_for(
        cells.size(),
        [&](std::size_t c) {
            using Clock = std::chrono::steady_clock;
            const auto [d, K, init] = cells[c];
            const std::uint64_t seed = derive_seed(cfg.master_seed, {d, K, init});
            auto base_row = [&](std::size_t S, std::string method, std::string scheme) {
                Record r;
                r.experiment = "rq1";
                r.d = d;
                r.K = K;
                r.S = S;
                r.method = std::move(method);
                r.scheme = std::move(scheme);
                r.seed = seed;
                r.init = init;
                return r;
            };
            struct Run {
                std::size_t S;
                SampleMethod sampler;
                BudgetScheme scheme;
            };
            std::vector<Run> runs;
            for (auto S : cfg.budgets_deltaex) runs.push_back({S, SampleMethod::stratified, BudgetScheme::proportional});
            if (cfg.include_ancestral)
                for (auto S : cfg.budgets_deltaex) runs.push_back({S, SampleMethod::ancestral, BudgetScheme::proportional});
            if (cfg.include_equal_split)
                for (auto S : cfg.budgets_deltaex) runs.push_back({S, SampleMethod::stratified, BudgetScheme::equal});

            auto& rows = per_cell[c];
            std::optional<SignedGaussianMixture> p;
            std::optional<GaussianSum> f;
            SignedLogValue truth;
            try {
                RngStream model_rng(derive_seed(seed, {0}));
                p = init_random_target(d, K, model_rng);
                RngStream f_rng(derive_seed(seed, {1}));
                f = init_integrand(d, f_rng);
                truth = exact_mixture_expectation_log(*p, *f);
            } catch (const Error& e) {
                for (const auto& run : runs) {
                    auto r = base_row(run.S, delta_ex_name(run.sampler), std::string(to_string(run.scheme)));
                    r.flag = std::string("error:") + e.what();
                    rows.push_back(std::move(r));
                }
                auto r = base_row(cfg.budget_arits, "ARITS", "mc");
                r.flag = std::string("error:") + e.what();
                rows.push_back(std::move(r));
                return;
            }
            const auto integrand = f->as_integrand();

            for (std::size_t j = 0; j < runs.size(); ++j) {
                const auto& run = runs[j];
                auto r = base_row(run.S, delta_ex_name(run.sampler), std::string(to_string(run.scheme)));
                r.true_i_log = truth.log_abs;
                try {
                    const auto t0 = Clock::now();
                    const auto target = Target::from_smm(*p, true);
                    const auto proposal = Proposal::from_smm(*p);
                    const auto plan = allocate_budget(proposal, run.S, run.scheme);
                    RngStream rng(derive_seed(seed, {2, j}));
                    const auto est = delta_ex(target, integrand, proposal, plan, run.sampler, rng);
                    r.time_incl_s = std::chrono::duration<double>(Clock::now() - t0).count();
                    r.value = est.value;
                    r.time_s = est.wall_time_s;
                    if (est.flagged()) r.flag = "zero_denominator:" + std::to_string(est.zero_denominator);
                    else r.log_abs_err = detail::log_abs_error(est.value, truth);
                } catch (const Error& e) {
                    r.flag = std::string("error:") + e.what();
                }
                rows.push_back(std::move(r));
            }

            auto r = base_row(cfg.budget_arits, "ARITS", "mc");
            r.true_i_log = truth.log_abs;
            try {
                const auto t0 = Clock::now();
                RngStream rng(derive_seed(seed, {3}));
                const auto t_sample = Clock::now();
                const auto batch = arits_sample(*p, cfg.budget_arits, cfg.arits, rng);
                const auto est = mc_estimate(integrand, batch);
                const auto t1 = Clock::now();
                r.value = est.value;
                r.time_s = std::chrono::duration<double>(t1 - t_sample).count();
                r.time_incl_s = std::chrono::duration<double>(t1 - t0).count();
                r.log_abs_err = detail::log_abs_error(est.value, truth);
            } catch (const Error& e) {
                r.flag = std::string("error:") + e.what();
            }
            rows.push_back(std::move(r));
        },
        cfg.threads);

    std::vector<Record> out;
    for (auto& rows : per_cell) out.insert(out.end(), rows.begin(), rows.end());
    return out;
}

/// Mean and sample standard deviation over inits, per (d, K, S, method, scheme).
struct SummaryRow {
    std::size_t d, K, S;
    std::string method, scheme;
    std::size_t n = 0;
    double mean_log_err = 0.0, sd_log_err = 0.0;
    double mean_time = 0.0, sd_time = 0.0;
};

inline std::vector<SummaryRow> summarize_rq1(std::span<const Record> rows) {
    using Key = std::tuple<std::size_t, std::size_t, std::string, std::size_t, std::string>;
    std::map<Key, std::vector<const Record*>> groups;
    std::vector<Key> order;
    for (const auto& r : rows) {
        Key k{r.d, r.K, r.method, r.S, r.scheme};
        if (!groups.contains(k)) order.push_back(k);
        groups[k].push_back(&r);
    }
    auto mean_sd = [](const std::vector<double>& v) {
        if (v.empty()) return std::pair{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair{m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
    };
    std::vector<SummaryRow> out;
    for (const auto& k : order) {
        std::vector<double> errs, times;
        for (const auto* r : groups[k]) {
            if (!r->log_abs_err) continue;
            errs.push_back(*r->log_abs_err);
            times.push_back(r->time_s);
        }
        SummaryRow s{std::get<0>(k), std::get<1>(k), std::get<3>(k), std::get<2>(k), std::get<4>(k)};
        s.n = errs.size();
        std::tie(s.mean_log_err, s.sd_log_err) = mean_sd(errs);
        std::tie(s.mean_time, s.sd_time) = mean_sd(times);
        out.push_back(s);
    }
    return out;
}

inline std::string summary_csv(std::span<const SummaryRow> rows) {
    std::ostringstream os;
    os << "d,K,S,method,scheme,n,mean_log_abs_err,sd_log_abs_err,mean_time_s,sd_time_s\n";
    for (const auto& r : rows)
        os << r.d << ',' << r.K << ',' << r.S << ',' << r.method << ',' << r.scheme << ',' << r.n << ','
           << format_double(r.mean_log_err) << ',' << format_double(r.sd_log_err) << ','
           << format_double(r.mean_time) << ',' << format_double(r.sd_time) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// RQ2: normalizing-constant estimation with perturbed proposals

struct Rq2Group {
    Record record;
    std::vector<Estimate> estimates;
};

/// One group per (safe mode, epsilon). The perturbation for a given epsilon is
/// shared by the safe and bare runs so the two differ only in the safe component.
inline std::vector<Rq2Group> run_rq2(const Rq2Config& cfg) {
    cfg.validate();
    using Clock = std::chrono::steady_clock;
    const auto tid = static_cast<std::uint64_t>(cfg.target_id);
    const auto base = rq2_base_mixture(cfg.target_id);
    const auto p = square_smm(base);
    const auto target = Target::from_smm(p, false);
    const auto truth = p.z_q();
    const double true_i = truth.to_double();

    RngStream kl_rng(derive_seed(cfg.master_seed, {tid, 0xC1}));
    const auto p_batch = arits_sample(p, cfg.kl_samples, cfg.arits, kl_rng);
    const auto p_log = as_log_density(p);

    std::vector<Rq2Group> out;
    for (const bool safe : cfg.safe_modes) {
        for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) {
            const double eps = cfg.epsilons[e];
            Record r;
            r.experiment = "rq2_target" + std::to_string(cfg.target_id);
            r.d = p.dim();
            r.K = base.size();
            r.S = cfg.S;
            r.method = delta_ex_name(cfg.sampler) + (safe ? "+safe" : "");
            r.scheme = std::string(to_string(cfg.scheme));
            r.seed = derive_seed(cfg.master_seed, {tid, e, safe ? 1u : 0u});
            r.epsilon = eps;
            r.safe = safe;
            r.true_i_log = truth.log_abs;
            Rq2Group g;
            try {
                const auto t0 = Clock::now();
                RngStream perturb_rng(derive_seed(cfg.master_seed, {tid, e, 0xE5}));
                const auto q = square_smm(perturb_stddevs(base, eps, perturb_rng));
                const auto proposal = safe ? with_safe(q, GaussianLeaf::isotropic(p.dim(), 0.0, cfg.safe_sigma), cfg.safe_alpha,
                                                       cfg.safe_mixing)
                                           : Proposal::from_smm(q);
                const auto plan = allocate_budget(proposal, cfg.S, cfg.scheme);
                g.estimates = replicate_delta_ex(target, Integrand::one(), proposal, plan, cfg.sampler, r.seed,
                                                 cfg.replications, cfg.threads);
                std::vector<double> values;
                std::size_t flagged = 0;
                for (const auto& est : g.estimates) {
                    r.time_s += est.wall_time_s;
                    if (est.flagged()) ++flagged;
                    else values.push_back(est.value);
                }
                if (values.size() >= 2) {
                    const auto st = replication_stats(values, true_i);
                    r.value = st.mean;
                    r.cov = st.cov;
                    r.log_abs_err = st.mean_log_abs_err;
                }
                r.flag = flagged ? "zero_denominator:" + std::to_string(flagged) : "";
                const auto q_log = as_log_density(proposal.smm);
                const auto kl = kl_estimate(p_batch, p_log, q_log);
                r.kl_hat = kl.value;
                r.time_incl_s = std::chrono::duration<double>(Clock::now() - t0).count();
            } catch (const Error& ex) {
                r.flag = std::string("error:") + ex.what();
            }
            g.record = std::move(r);
            out.push_back(std::move(g));
        }
    }
    return out;
}

/// Resolved modes for questions the method description leaves open; written to sweep metadata.
inline json design_modes() {
    return {{"arits_variable_order", "ascending_index"},
            {"arits_default_lane_skipping", true},
            {"rng", "mt19937_64 seeded by splitmix64(master_seed, path)"},
            {"perturbation_draws", "per_dimension_per_leaf"},
            {"stratified_part_estimator", "stratum_weighted_mean"},
            {"proportional_leftover", "positive_part"},
            {"safe_component", "folded_into_positive_part"},
            {"safe_mixing_default", "normalized"},
            {"rq2_kl_against", "mixed_proposal"},
            {"rq1_arits_estimator", "plain_mc_mean_of_f"},
            {"log_base", "natural"},
            {"zero_density_cancellation", "relative 4*(n+16)*eps"}};
}

}  // namespace smmis
