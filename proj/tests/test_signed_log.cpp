#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "smmis/signed_log.hpp"
#include "smmis/rng.hpp"

using namespace smmis;

TEST(SignedLog, ZeroIsCanonical) {
    EXPECT_EQ(SignedLogValue::from_double(0.0), SignedLogValue::zero());
    EXPECT_EQ(SignedLogValue::from_log(1, kNegInf), SignedLogValue::zero());
    EXPECT_EQ(SignedLogValue::from_log(0, 3.0), SignedLogValue::zero());
    EXPECT_EQ(SignedLogValue::zero().to_double(), 0.0);
}

TEST(SignedLog, SumOfOppositeTermsFromSpecExample) {
    const SignedLogValue terms[] = {{1, 0.0}, {-1, std::log(0.5)}};
    const auto v = signed_logsumexp(terms);
    EXPECT_EQ(v.sign, 1);
    EXPECT_NEAR(v.log_abs, std::log(0.5), 1e-15);
}

TEST(SignedLog, ExactCancellationIsZero) {
    const SignedLogValue terms[] = {{1, -700.0}, {-1, -700.0}};
    EXPECT_TRUE(signed_logsumexp(terms).is_zero());
}

TEST(SignedLog, TinyMagnitudesSurvive) {
    // e^-800 is far below the smallest double; the log form keeps it.
    const SignedLogValue terms[] = {{1, -800.0}, {1, -800.0}, {-1, -801.0}};
    const auto v = signed_logsumexp(terms);
    EXPECT_EQ(v.sign, 1);
    EXPECT_NEAR(v.log_abs, -800.0 + std::log(2.0 - std::exp(-1.0)), 1e-12);
}

TEST(SignedLog, MatchesLinearArithmeticOnRandomTerms) {
    RngStream rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<SignedLogValue> terms;
        double linear = 0.0;
        for (int i = 0; i < 5; ++i) {
            const double v = rng.uniform(-2.0, 2.0);
            terms.push_back(SignedLogValue::from_double(v));
            linear += v;
        }
        const auto r = signed_logsumexp(terms);
        if (std::abs(linear) < 1e-9) continue;
        EXPECT_NEAR(r.to_double(), linear, 1e-12 * std::max(1.0, std::abs(linear)));
    }
}

TEST(SignedLog, ProductAndQuotient) {
    const auto a = SignedLogValue::from_double(-3.0);
    const auto b = SignedLogValue::from_double(0.5);
    EXPECT_NEAR((a * b).to_double(), -1.5, 1e-15);
    EXPECT_NEAR((a / b).to_double(), -6.0, 1e-14);
    EXPECT_NEAR((a - b).to_double(), -3.5, 1e-15);
    EXPECT_TRUE((a * SignedLogValue::zero()).is_zero());
}

TEST(SignedLog, PlainLogSumExp) {
    const double logs[] = {std::log(1.0), std::log(2.0), kNegInf};
    EXPECT_NEAR(logsumexp(logs), std::log(3.0), 1e-15);
}
