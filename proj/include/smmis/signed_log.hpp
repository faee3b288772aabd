#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>

namespace smmis {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// A real number stored as (sign, log|value|). Zero is canonical: sign 0 and
// log_abs = -inf. Densities in high dimension routinely fall below 1e-300, so
// every accumulation in the library goes through this type.
struct SignedLogValue {
    int sign = 0;
    double log_abs = kNegInf;

    static constexpr SignedLogValue zero() { return {}; }

    static SignedLogValue from_log(int sign, double log_abs) {
        if (sign == 0 || log_abs == kNegInf) return zero();
        return {sign > 0 ? 1 : -1, log_abs};
    }

    static SignedLogValue from_double(double v) {
        if (v == 0.0) return zero();
        return {v > 0 ? 1 : -1, std::log(std::abs(v))};
    }

    double to_double() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }

    bool is_zero() const { return sign == 0; }
    bool is_positive() const { return sign > 0; }
    bool is_finite() const { return sign == 0 || std::isfinite(log_abs); }

    SignedLogValue operator-() const { return from_log(-sign, log_abs); }

    friend SignedLogValue operator*(SignedLogValue a, SignedLogValue b) {
        return from_log(a.sign * b.sign, a.log_abs + b.log_abs);
    }
    friend SignedLogValue operator/(SignedLogValue a, SignedLogValue b) {
        return from_log(a.sign * b.sign, a.log_abs - b.log_abs);
    }
    friend bool operator==(const SignedLogValue&, const SignedLogValue&) = default;
    friend std::ostream& operator<<(std::ostream& os, const SignedLogValue& v) {
        return os << "(" << v.sign << ", " << v.log_abs << ")";
    }
};

/// Relative cancellation threshold for a signed sum of `n_terms` terms. A result
/// whose magnitude is below this fraction of the sum of absolute values is
/// indistinguishable from zero in double precision and is reported as zero.
inline double cancellation_tolerance(std::size_t n_terms) {
    return 4.0 * static_cast<double>(n_terms + 16) * std::numeric_limits<double>::epsilon();
}

/// Max-shifted signed log-sum-exp. `sign_of(i)` / `log_of(i)` describe term i.
template <class SignFn, class LogFn>
SignedLogValue signed_logsumexp(std::size_t n, SignFn sign_of, LogFn log_of) {
    double shift = kNegInf;
    for (std::size_t i = 0; i < n; ++i)
        if (sign_of(i) != 0) shift = std::max(shift, log_of(i));
    if (shift == kNegInf) return SignedLogValue::zero();
    if (!std::isfinite(shift)) return {1, shift};  // +inf or nan propagates

    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int s = sign_of(i);
        if (s == 0) continue;
        const double e = std::exp(log_of(i) - shift);
        (s > 0 ? pos : neg) += e;
    }
    const double diff = pos - neg;
    if (std::abs(diff) <= cancellation_tolerance(n) * (pos + neg)) return SignedLogValue::zero();
    return {diff > 0 ? 1 : -1, shift + std::log(std::abs(diff))};
}

inline SignedLogValue signed_logsumexp(std::span<const SignedLogValue> terms) {
    return signed_logsumexp(
        terms.size(), [&](std::size_t i) { return terms[i].sign; },
        [&](std::size_t i) { return terms[i].log_abs; });
}

inline SignedLogValue operator+(SignedLogValue a, SignedLogValue b) {
    const SignedLogValue t[2] = {a, b};
    return signed_logsumexp(t);
}
inline SignedLogValue operator-(SignedLogValue a, SignedLogValue b) { return a + (-b); }

/// Plain log-sum-exp of non-negative terms given as logs.
inline double logsumexp(std::span<const double> logs) {
    double m = kNegInf;
    for (double l : logs) m = std::max(m, l);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double l : logs) acc += std::exp(l - m);
    return m + std::log(acc);
}

}  // namespace smmis
