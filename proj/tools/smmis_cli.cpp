// smmis: command-line front end for the subtractive-mixture importance sampling library.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "smmis/smmis.hpp"

namespace fs = std::filesystem;
using namespace smmis;

namespace {

enum Exit : int { kOk = 0, kValidationFailure = 1, kUsage = 2, kStarved = 3, kValley = 4 };

struct UsageError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// model

struct ModelOpts {
    int target_id = 1;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_model(const ModelOpts& o) {
    auto base = rq2_base_mixture(o.target_id);
    if (o.epsilon > 0.0) {
        RngStream rng(o.seed);
        base = perturb_stddevs(base, o.epsilon, rng);
    }
    save_model(o.out, square_smm(base));
    return kOk;
}

// ---------------------------------------------------------------------------
// sample

struct SampleOpts {
    std::string model;
    bool square = false;
    std::string method;
    std::string part = "full";
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
    AritsConfig arits;
};

int cmd_sample(const SampleOpts& o) {
    const auto method = parse_sample_method(o.method);
    if (o.part != "full" && o.part != "plus" && o.part != "minus")
        throw UsageError("--part must be full, plus or minus");
    if (method == SampleMethod::arits && o.part != "full")
        throw UsageError("arits samples the full mixture; use --part full");
    if (method != SampleMethod::arits && o.part == "full")
        throw UsageError(std::string(to_string(method)) + " samples one part of the difference form; use --part plus or minus");

    const auto smm = load_model(o.model, o.square).smm;
    RngStream rng(o.seed);
    SampleBatch batch;
    if (method == SampleMethod::arits) {
        batch = arits_sample(smm, o.n, o.arits, rng);
    } else {
        const auto df = difference_form(smm);
        if (o.part == "minus" && !df.negative) throw UsageError("negative part empty: the model has no negative components");
        batch = sample_additive(o.part == "plus" ? df.positive : *df.negative, o.n, method, rng);
    }
    write_text_file(o.out, sample_csv(batch));
    return kOk;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOpts {
    std::string model;
    std::string target;
    bool square = false;
    std::string f_path;
    bool f_one = false;
    bool unnormalized = false;
    bool safe = false;
    double safe_sigma = 3.0;
    double safe_alpha = 0.001;
    std::string safe_mixing = "normalized";
    std::string scheme = "proportional";
    std::string sampler = "stratified";
    std::size_t S = 0;
    std::size_t replications = 1;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::string out;
};

int cmd_estimate(const EstimateOpts& o) {
    if (o.f_one == !o.f_path.empty()) throw UsageError("give exactly one of --f or --f-one");
    const auto sampler = parse_sample_method(o.sampler);
    if (sampler == SampleMethod::arits) throw UsageError("--sampler must be ancestral or stratified");
    const auto scheme = parse_budget_scheme(o.scheme);
    if (o.replications == 0) throw UsageError("--replications must be >= 1");

    const auto q = load_model(o.model, o.square).smm;
    const auto p = o.target.empty() ? q : load_model(o.target, o.square).smm;
    if (p.dim() != q.dim()) throw UsageError("target and proposal dimensions differ");
    q.ensure_normalizable("proposal");
    p.ensure_normalizable("target");

    const Proposal proposal =
        o.safe ? with_safe(q, GaussianLeaf::isotropic(q.dim(), 0.0, o.safe_sigma), o.safe_alpha,
                           parse_safe_mixing(o.safe_mixing))
               : Proposal::from_smm(q);
    const auto target = Target::from_smm(p, !o.unnormalized);

    Integrand f = Integrand::one();
    double truth = o.unnormalized ? p.z_q().to_double() : 1.0;
    if (!o.f_one) {
        const auto g = gaussian_sum_from_json(read_json_file(o.f_path));
        if (g.dim() != 0 && g.dim() != p.dim()) throw UsageError("integrand dimension differs from the target");
        f = g.as_integrand();
        truth = exact_mixture_expectation(p, g);
        if (o.unnormalized) truth *= p.z_q().to_double();
    }

    const auto plan = allocate_budget(proposal, o.S, scheme);
    const auto ests = replicate_delta_ex(target, f, proposal, plan, sampler, o.seed, o.replications,
                                         o.threads ? o.threads : default_thread_count());
    if (!o.out.empty()) write_text_file(o.out, estimate_csv(ests));

    std::vector<double> values;
    std::size_t flagged = 0;
    for (const auto& e : ests) {
        if (e.flagged()) ++flagged;
        else values.push_back(e.value);
    }
    double mean = std::numeric_limits<double>::quiet_NaN();
    if (!values.empty()) {
        mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
    }
    if (o.replications > 1) {
        const double cov = values.size() >= 2 ? replication_stats(values, truth).cov
                                              : std::numeric_limits<double>::quiet_NaN();
        std::cout << "value=" << format_double(mean) << ", cov=" << format_double(cov) << '\n';
    } else {
        std::cout << "value=" << format_double(mean) << '\n';
    }
    if (flagged > 0)
        std::cerr << "warning: " << flagged << " of " << o.replications
                  << " replications drew samples where the proposal density is zero\n";
    if (2 * flagged > o.replications) {
        std::cerr << "error: low-density valley: the proposal vanishes at sampled points in more than half of the "
                     "replications; add a safe component (--safe)\n";
        return kValley;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateOpts {
    std::string model;
    bool square = false;
    std::size_t points = 1000;
    std::uint64_t seed = 0;
};

// Points scattered around every leaf at twice its width.
std::vector<std::vector<double>> probe_points(const SignedGaussianMixture& smm, std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<std::vector<double>> pts(n, std::vector<double>(smm.dim()));
    for (std::size_t s = 0; s < n; ++s) {
        const auto& leaf = smm[s % smm.size()].leaf;
        for (std::size_t i = 0; i < smm.dim(); ++i) pts[s][i] = leaf.mean()[i] + 2.0 * leaf.stddev()[i] * rng.normal();
    }
    return pts;
}

int cmd_validate(const ValidateOpts& o) {
    const auto loaded = load_model(o.model, o.square);
    const auto& smm = loaded.smm;
    bool ok = true;
    auto report = [&](const std::string& name, const std::string& status, const std::string& detail) {
        std::cout << status << ' ' << name;
        if (!detail.empty()) std::cout << ": " << detail;
        std::cout << '\n';
        if (status == "FAIL") ok = false;
    };

    {
        std::string detail = "z_q sign " + std::to_string(smm.z_q().sign) + ", log|z_q| " + format_double(smm.z_q().log_abs);
        bool pass = smm.is_normalizable();
        if (loaded.stored_z_q) {
            const auto& z = *loaded.stored_z_q;
            detail += "; stored sign " + std::to_string(z.sign);
            if (!z.is_positive()) pass = false;
            else if (smm.is_normalizable() && std::abs(z.log_abs - smm.z_q().log_abs) > 1e-9) {
                detail += ", stored log|z_q| " + format_double(z.log_abs) + " disagrees";
                pass = false;
            }
        }
        report("normalization", pass ? "PASS" : "FAIL", detail);
    }

    const auto pts = probe_points(smm, o.points, o.seed);
    {
        std::size_t negative = 0;
        for (const auto& x : pts) negative += smm.logdensity(x, Normalization::unnormalized).sign < 0;
        report("non_negativity", negative ? "FAIL" : "PASS",
               std::to_string(negative) + " of " + std::to_string(pts.size()) + " points negative");
    }

    if (!smm.is_normalizable()) {
        report("reconstruction", "SKIPPED", "model is not normalizable");
        report("quadrature", "SKIPPED", "model is not normalizable");
        return ok ? kOk : kValidationFailure;
    }

    {
        // Probe where the model has mass; in near-zero valleys both forms are limited by cancellation.
        const auto df = difference_form(smm);
        RngStream rng(derive_seed(o.seed, {1}));
        const auto draws = arits_sample(smm, o.points, AritsConfig{}, rng);
        double worst = 0.0;
        for (std::size_t s = 0; s < draws.size(); ++s) {
            const auto x = draws.row(s);
            const auto a = df.reconstruct_logdensity(x), b = smm.logdensity(x);
            if (b.is_zero()) continue;
            worst = std::max(worst, std::abs((a / b).to_double() - 1.0));
        }
        report("reconstruction", worst < 1e-10 ? "PASS" : "FAIL", "max relative error " + format_double(worst));
    }

    if (smm.dim() > 2) {
        report("quadrature", "SKIPPED", "d = " + std::to_string(smm.dim()) + " > 2");
    } else {
        const double mass =
            quadrature(as_log_density(smm), covering_box(smm), smm.dim() == 1 ? kDefaultQuadraturePoints : 1025);
        report("quadrature", std::abs(mass - 1.0) < 1e-6 ? "PASS" : "FAIL", "integral " + format_double(mass));
    }
    return ok ? kOk : kValidationFailure;
}

// ---------------------------------------------------------------------------
// rq1 / rq2

struct SweepOpts {
    std::string config;
    std::string out_dir;
    std::size_t threads = 0;
};

json metadata(const std::string& experiment, std::uint64_t master_seed, json config) {
    return {{"experiment", experiment},
            {"master_seed", master_seed},
            {"version", kVersion},
            {"design_modes", design_modes()},
            {"config", std::move(config)}};
}

int cmd_rq1(const SweepOpts& o) {
    auto cfg = rq1_config_from_json(read_json_file(o.config));
    if (o.threads) cfg.threads = o.threads;
    fs::create_directories(o.out_dir);
    const auto rows = run_rq1(cfg);
    const auto summary = summarize_rq1(rows);
    write_text_file((fs::path(o.out_dir) / "rq1.csv").string(), sweep_csv(rows));
    write_text_file((fs::path(o.out_dir) / "rq1_summary.csv").string(), summary_csv(summary));
    const json cj = {{"dims", cfg.dims},
                     {"components_K", cfg.components_K},
                     {"budgets_deltaex", cfg.budgets_deltaex},
                     {"budget_arits", cfg.budget_arits},
                     {"n_inits", cfg.n_inits},
                     {"include_ancestral", cfg.include_ancestral},
                     {"include_equal_split", cfg.include_equal_split},
                     {"arits", detail::arits_to_json(cfg.arits)}};
    write_text_file((fs::path(o.out_dir) / "metadata.json").string(),
                    metadata("rq1", cfg.master_seed, cj).dump(2));
    std::size_t errors = 0;
    for (const auto& r : rows) errors += r.flag.rfind("error:", 0) == 0;
    if (errors) std::cerr << "warning: " << errors << " rows failed; see the flag column\n";
    return kOk;
}

int cmd_rq2(const SweepOpts& o) {
    auto cfg = rq2_config_from_json(read_json_file(o.config));
    if (o.threads) cfg.threads = o.threads;
    fs::create_directories(o.out_dir);
    const auto groups = run_rq2(cfg);
    std::vector<Record> rows;
    std::string reps = "epsilon,safe," + std::string(kEstimateCsvHeader) + "\n";
    for (const auto& g : groups) {
        rows.push_back(g.record);
        for (const auto& e : g.estimates)
            reps += format_double(*g.record.epsilon) + ',' + (*g.record.safe ? "1" : "0") + ',' + estimate_csv_row(e);
    }
    write_text_file((fs::path(o.out_dir) / "rq2.csv").string(), sweep_csv(rows));
    write_text_file((fs::path(o.out_dir) / "rq2_replications.csv").string(), reps);
    std::vector<bool> modes = cfg.safe_modes;
    const json cj = {{"target_id", cfg.target_id},
                     {"epsilons", cfg.epsilons},
                     {"safe_enabled", modes},
                     {"safe_sigma", cfg.safe_sigma},
                     {"safe_alpha", cfg.safe_alpha},
                     {"safe_mixing", to_string(cfg.safe_mixing)},
                     {"S", cfg.S},
                     {"replications", cfg.replications},
                     {"kl_samples", cfg.kl_samples},
                     {"sampler", to_string(cfg.sampler)},
                     {"scheme", to_string(cfg.scheme)},
                     {"arits", detail::arits_to_json(cfg.arits)}};
    write_text_file((fs::path(o.out_dir) / "metadata.json").string(),
                    metadata("rq2", cfg.master_seed, cj).dump(2));
    return kOk;
}

void add_arits_options(CLI::App* app, AritsConfig& a) {
    app->add_option("--lower-bound", a.lower_bound, "ARITS bisection lower bound");
    app->add_option("--upper-bound", a.upper_bound, "ARITS bisection upper bound");
    app->add_option("--tolerance", a.tolerance, "ARITS bisection tolerance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subtractive Gaussian mixtures: sampling, delta-ex importance sampling and experiment sweeps"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    ModelOpts mo;
    auto* model = app.add_subcommand("model", "Write a two-dimensional benchmark target or a perturbed proposal");
    model->add_option("--target-id", mo.target_id, "Benchmark target (1 or 2)")->check(CLI::IsMember({1, 2}));
    model->add_option("--epsilon", mo.epsilon, "Log-normal stddev perturbation scale")->check(CLI::NonNegativeNumber);
    model->add_option("--seed", mo.seed, "Perturbation seed");
    model->add_option("-o,--out", mo.out, "Output model JSON")->required();

    SampleOpts so;
    auto* sample = app.add_subcommand("sample", "Draw samples and write a CSV dump");
    sample->add_option("model", so.model, "Model JSON")->required();
    sample->add_flag("--square", so.square, "Square the loaded mixture first");
    sample->add_option("--method", so.method, "ancestral, stratified or arits")->required();
    sample->add_option("--part", so.part, "full, plus or minus");
    sample->add_option("-n,--n", so.n, "Number of samples")->required()->check(CLI::PositiveNumber);
    sample->add_option("--seed", so.seed, "Seed");
    sample->add_option("-o,--out", so.out, "Output CSV")->required();
    add_arits_options(sample, so.arits);

    EstimateOpts eo;
    auto* estimate = app.add_subcommand("estimate", "Run delta-ex replications");
    estimate->add_option("model", eo.model, "Proposal model JSON")->required();
    estimate->add_option("--target", eo.target, "Target model JSON (defaults to the proposal)");
    estimate->add_flag("--square", eo.square, "Square the loaded mixtures first");
    estimate->add_option("--f", eo.f_path, "Gaussian-sum integrand JSON");
    estimate->add_flag("--f-one", eo.f_one, "Use f = 1 (normalizing-constant task with --unnormalized)");
    estimate->add_flag("--unnormalized", eo.unnormalized, "Treat the target as unnormalized (estimate its mass)");
    estimate->add_flag("--safe", eo.safe, "Mix a zero-mean isotropic safe component into the proposal");
    estimate->add_option("--safe-sigma", eo.safe_sigma, "Safe component stddev")->check(CLI::PositiveNumber);
    estimate->add_option("--safe-alpha", eo.safe_alpha, "Safe component weight")->check(CLI::Range(0.0, 1.0));
    estimate->add_option("--safe-mixing", eo.safe_mixing, "normalized or unnormalized (alpha against the SMM's own mass)");
    estimate->add_option("--scheme", eo.scheme, "proportional, equal or safe_split");
    estimate->add_option("--sampler", eo.sampler, "stratified or ancestral");
    estimate->add_option("-S,--S", eo.S, "Sample budget per replication")->required();
    estimate->add_option("-r,--replications", eo.replications, "Number of replications");
    estimate->add_option("--seed", eo.seed, "Master seed");
    estimate->add_option("--threads", eo.threads, "Worker threads (default: SMMIS_THREADS or all cores)");
    estimate->add_option("-o,--out", eo.out, "Output CSV");

    ValidateOpts vo;
    auto* validate = app.add_subcommand("validate", "Check model invariants");
    validate->add_option("model", vo.model, "Model JSON")->required();
    validate->add_flag("--square", vo.square, "Square the loaded mixture first");
    validate->add_option("--points", vo.points, "Probe points")->check(CLI::PositiveNumber);
    validate->add_option("--seed", vo.seed, "Probe seed");

    SweepOpts r1o, r2o;
    auto* rq1 = app.add_subcommand("rq1", "Monte Carlo comparison sweep (delta-ex vs ARITS)");
    rq1->add_option("config", r1o.config, "Config JSON")->required();
    rq1->add_option("out_dir", r1o.out_dir, "Output directory")->required();
    rq1->add_option("--threads", r1o.threads, "Worker threads");
    auto* rq2 = app.add_subcommand("rq2", "Normalizing-constant sweep with perturbed proposals");
    rq2->add_option("config", r2o.config, "Config JSON")->required();
    rq2->add_option("out_dir", r2o.out_dir, "Output directory")->required();
    rq2->add_option("--threads", r2o.threads, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*model) return cmd_model(mo);
        if (*sample) return cmd_sample(so);
        if (*estimate) return cmd_estimate(eo);
        if (*validate) return cmd_validate(vo);
        if (*rq1) return cmd_rq1(r1o);
        if (*rq2) return cmd_rq2(r2o);
    } catch (const StarvedBudgetError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kStarved;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
