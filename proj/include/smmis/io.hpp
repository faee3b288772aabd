#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smmis/error.hpp"
#include "smmis/estimators.hpp"
#include "smmis/mixture.hpp"
#include "smmis/sampling.hpp"

namespace smmis {

using json = nlohmann::json;

/// Locale-independent shortest round-trip formatting.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// Models

inline json leaf_to_json(const GaussianLeaf& leaf) { return {{"mean", leaf.mean()}, {"stddev", leaf.stddev()}}; }

inline GaussianLeaf leaf_from_json(const json& j) {
    return GaussianLeaf(j.at("mean").get<std::vector<double>>(), j.at("stddev").get<std::vector<double>>());
}

inline json to_json(const SignedGaussianMixture& smm) {
    json comps = json::array();
    for (const auto& c : smm.components())
        comps.push_back({{"coeff", c.coeff}, {"log_scale", c.log_scale}, {"mean", c.leaf.mean()},
                         {"stddev", c.leaf.stddev()}});
    return {{"dim", smm.dim()},
            {"z_q", {{"sign", smm.z_q().sign}, {"log_abs", smm.z_q().is_zero() ? json(nullptr) : json(smm.z_q().log_abs)}}},
            {"components", comps}};
}

struct LoadedModel {
    SignedGaussianMixture smm;
    /// z_q as recorded in the file, if present. May disagree with the recomputed value.
    std::optional<SignedLogValue> stored_z_q;
};

/// Accepts the flat form {dim, components:[{coeff, log_scale, mean, stddev}]} or
/// the pre-squaring form {dim, coeffs, leaves}. With `square` the loaded mixture is squared.
inline LoadedModel model_from_json(const json& j, bool square = false) {
    try {
        std::vector<Component> comps;
        if (j.contains("components")) {
            for (const auto& c : j.at("components"))
                comps.push_back({c.at("coeff").get<double>(), c.value("log_scale", 0.0), leaf_from_json(c)});
        } else if (j.contains("coeffs")) {
            const auto coeffs = j.at("coeffs").get<std::vector<double>>();
            const auto& leaves = j.at("leaves");
            require(coeffs.size() == leaves.size(), "model: coeffs and leaves differ in length");
            for (std::size_t k = 0; k < coeffs.size(); ++k) comps.push_back({coeffs[k], 0.0, leaf_from_json(leaves[k])});
        } else {
            throw InputError("model: expected 'components' or 'coeffs'/'leaves'");
        }
        if (j.contains("dim"))
            for (const auto& c : comps)
                require(c.leaf.dim() == j.at("dim").get<std::size_t>(), "model: leaf dimension disagrees with 'dim'");
        SignedGaussianMixture smm(std::move(comps));
        std::optional<SignedLogValue> stored;
        if (!square && j.contains("z_q")) {
            const auto& z = j.at("z_q");
            const int sign = z.at("sign").get<int>();
            stored = z.at("log_abs").is_null() ? SignedLogValue::zero()
                                               : SignedLogValue::from_log(sign, z.at("log_abs").get<double>());
        }
        if (square) return {square_smm(smm), std::nullopt};
        return {std::move(smm), stored};
    } catch (const json::exception& e) {
        throw InputError(std::string("model: malformed JSON document: ") + e.what());
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("cannot parse '" + path + "': " + e.what());
    }
}

inline LoadedModel load_model(const std::string& path, bool square = false) {
    return model_from_json(read_json_file(path), square);
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
    if (text.empty() || text.back() != '\n') out << '\n';
}

inline void save_model(const std::string& path, const SignedGaussianMixture& smm) {
    write_text_file(path, to_json(smm).dump(2));
}

// ---------------------------------------------------------------------------
// Integrands: {dim, constant, components:[{weight, mean, stddev}]}

inline json to_json(const GaussianSum& f) {
    json comps = json::array();
    for (std::size_t m = 0; m < f.leaves.size(); ++m)
        comps.push_back({{"weight", f.weights[m]}, {"mean", f.leaves[m].mean()}, {"stddev", f.leaves[m].stddev()}});
    return {{"dim", f.dim()}, {"constant", f.constant}, {"components", comps}};
}

inline GaussianSum gaussian_sum_from_json(const json& j) {
    try {
        GaussianSum f;
        f.constant = j.value("constant", 0.0);
        for (const auto& c : j.at("components")) {
            f.weights.push_back(c.at("weight").get<double>());
            f.leaves.push_back(leaf_from_json(c));
        }
        for (const auto& l : f.leaves) require(l.dim() == f.leaves.front().dim(), "integrand: mixed dimensions");
        return f;
    } catch (const json::exception& e) {
        throw InputError(std::string("integrand: malformed JSON document: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// CSV

/// Sample dump: header x1,...,xd,stratum,method; stratum blank when absent.
inline std::string sample_csv(const SampleBatch& b) {
    std::ostringstream os;
    for (std::size_t i = 0; i < b.dim; ++i) os << 'x' << (i + 1) << ',';
    os << "stratum,method\n";
    for (std::size_t s = 0; s < b.size(); ++s) {
        for (double v : b.row(s)) os << format_double(v) << ',';
        if (b.strata) os << (*b.strata)[s];
        os << ',' << to_string(b.method) << '\n';
    }
    return os.str();
}

inline constexpr const char* kEstimateCsvHeader = "method,scheme,S,S_plus,S_minus,value,flag_zero_denominator,time_s,seed";

inline std::string estimate_csv_row(const Estimate& e) {
    std::ostringstream os;
    os << e.method << ',' << to_string(e.budget.scheme) << ',' << e.budget.total << ',' << e.budget.s_plus << ','
       << e.budget.s_minus << ',' << format_double(e.value) << ',' << e.zero_denominator << ','
       << format_double(e.wall_time_s) << ',' << e.seed << '\n';
    return os.str();
}

inline std::string estimate_csv(std::span<const Estimate> estimates) {
    std::string out = std::string(kEstimateCsvHeader) + "\n";
    for (const auto& e : estimates) out += estimate_csv_row(e);
    return out;
}

}  // namespace smmis
