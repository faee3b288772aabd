#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "smmis/gaussian.hpp"
#include "smmis/oracles.hpp"
#include "test_support.hpp"

using namespace smmis;
using smmis::testing::rel_err;

TEST(GaussianLeaf, RejectsInvalidParameters) {
    EXPECT_THROW(GaussianLeaf({}, {}), InputError);
    EXPECT_THROW(GaussianLeaf({0.0}, {0.0}), InputError);
    EXPECT_THROW(GaussianLeaf({0.0}, {-1.0}), InputError);
    EXPECT_THROW(GaussianLeaf({0.0, 1.0}, {1.0}), InputError);
}

TEST(GaussianLogpdf, StandardNormalAtOrigin) {
    const double x1[] = {0.0};
    EXPECT_NEAR(gaussian_logpdf(GaussianLeaf({0.0}, {1.0}), x1), -0.9189385332046727, 1e-15);
    const double x2[] = {0.0, 0.0};
    EXPECT_NEAR(gaussian_logpdf(GaussianLeaf::isotropic(2, 0.0, 1.0), x2), -1.8378770664093453, 1e-15);
}

TEST(GaussianLogpdf, ShiftedAndScaled) {
    const double x[] = {3.0};
    EXPECT_NEAR(gaussian_logpdf(GaussianLeaf({1.0}, {2.0}), x), -2.1120857137646180, 1e-13);
}

TEST(GaussianLogpdf, DimensionMismatchThrows) {
    const double x[] = {0.0, 1.0};
    EXPECT_THROW(gaussian_logpdf(GaussianLeaf({0.0}, {1.0}), x), InputError);
}

TEST(GaussianProduct, StandardNormalSquared) {
    const auto p = gaussian_product(GaussianLeaf({0.0}, {1.0}), GaussianLeaf({0.0}, {1.0}));
    EXPECT_NEAR(p.log_scale, -1.2655121234846454, 1e-14);
    EXPECT_NEAR(p.leaf.mean()[0], 0.0, 1e-15);
    EXPECT_NEAR(p.leaf.stddev()[0], std::sqrt(0.5), 1e-15);
}

TEST(GaussianProduct, UnequalWidthsMatchQuadratureOverlap) {
    const auto p = gaussian_product(GaussianLeaf({0.0}, {0.6}), GaussianLeaf({0.0}, {1.0}));
    EXPECT_NEAR(std::exp(p.log_scale), 0.342090183211859, 1e-13);
    // Independent check: integrate the pointwise product on a grid.
    const GaussianLeaf a({0.0}, {0.6}), b({0.0}, {1.0});
    const double q = quadrature(
        [&](std::span<const double> x) { return gaussian_logpdf(a, x) + gaussian_logpdf(b, x); }, {{-12.0, 12.0}});
    EXPECT_NEAR(q, std::exp(p.log_scale), 1e-12);
}

TEST(GaussianProduct, PointwiseIdentityAtRandomPoints) {
    RngStream rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + trial % 4;
        std::vector<double> ma(d), sa(d), mb(d), sb(d);
        for (std::size_t i = 0; i < d; ++i) {
            ma[i] = rng.normal();
            mb[i] = rng.normal();
            sa[i] = rng.uniform(0.3, 3.0);
            sb[i] = rng.uniform(0.3, 3.0);
        }
        const GaussianLeaf a(ma, sa), b(mb, sb);
        const auto p = gaussian_product(a, b);
        for (int k = 0; k < 100; ++k) {
            const auto x = smmis::testing::random_point(rng, d, 2.0);
            const double lhs = gaussian_logpdf(a, x) + gaussian_logpdf(b, x);
            const double rhs = p.log_scale + gaussian_logpdf(p.leaf, x);
            EXPECT_LT(rel_err(std::exp(rhs), std::exp(lhs)), 1e-12);
        }
    }
}

TEST(GaussianProduct, DimensionMismatchThrows) {
    EXPECT_THROW(gaussian_product(GaussianLeaf({0.0}, {1.0}), GaussianLeaf::isotropic(2, 0.0, 1.0)), InputError);
}

TEST(PackedLeaves, AgreesWithScalarEvaluation) {
    RngStream rng(5);
    std::vector<GaussianLeaf> leaves;
    for (int m = 0; m < 7; ++m) leaves.emplace_back(smmis::testing::random_point(rng, 3), std::vector<double>{1.0, 2.0, 0.5});
    const PackedLeaves packed(leaves);
    std::vector<double> out(leaves.size());
    const auto x = smmis::testing::random_point(rng, 3);
    packed.logpdf_all(x, out);
    for (std::size_t m = 0; m < leaves.size(); ++m) EXPECT_NEAR(out[m], gaussian_logpdf(leaves[m], x), 1e-12);
}

TEST(StdNormalCdf, KnownValues) {
    EXPECT_DOUBLE_EQ(std_normal_cdf(0.0), 0.5);
    EXPECT_NEAR(std_normal_cdf(1.959963984540054), 0.975, 1e-15);
    EXPECT_EQ(std_normal_cdf(-60.0), 0.0);
    EXPECT_EQ(std_normal_cdf(60.0), 1.0);
}
