#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "smmis/experiments.hpp"
#include "smmis/mixture.hpp"
#include "smmis/oracles.hpp"
#include "test_support.hpp"

using namespace smmis;
using namespace smmis::testing;

TEST(SignedMixture, RejectsEmptyAndMixedDimensions) {
    EXPECT_THROW(SignedGaussianMixture({}), InputError);
    EXPECT_THROW(SignedGaussianMixture({{1.0, 0.0, GaussianLeaf({0.0}, {1.0})},
                                        {1.0, 0.0, GaussianLeaf::isotropic(2, 0.0, 1.0)}}),
                 InputError);
    EXPECT_THROW(SignedGaussianMixture({{0.0, 0.0, GaussianLeaf({0.0}, {1.0})}}), InputError);
}

TEST(SignedMixture, PrunesNegligibleComponents) {
    const SignedGaussianMixture m({{1.0, 0.0, GaussianLeaf({0.0}, {1.0})}, {1e-310, 0.0, GaussianLeaf({1.0}, {1.0})}});
    EXPECT_EQ(m.size(), 1u);
}

TEST(SignedMixture, NormalizingConstantIsCoefficientSum) {
    const SignedGaussianMixture m({{0.7, 0.0, GaussianLeaf({0.0}, {1.0})}, {-0.2, std::log(0.5), GaussianLeaf({1.0}, {2.0})}});
    EXPECT_NEAR(m.z_q().to_double(), 0.6, 1e-15);
    EXPECT_TRUE(m.is_normalizable());
}

TEST(SignedMixture, NegativeMassIsNotNormalizable) {
    const SignedGaussianMixture m({{0.2, 0.0, GaussianLeaf({0.0}, {1.0})}, {-0.5, 0.0, GaussianLeaf({0.0}, {2.0})}});
    EXPECT_FALSE(m.is_normalizable());
    const double x[] = {0.0};
    EXPECT_THROW(m.logdensity(x), DegenerateModelError);
    EXPECT_NO_THROW(m.logdensity(x, Normalization::unnormalized));
    EXPECT_THROW(difference_form(m), DegenerateModelError);
}

TEST(SquareSmm, ComponentCountAndCrossTermCoefficients) {
    RngStream rng(3);
    for (std::size_t K = 1; K <= 6; ++K) {
        const auto base = random_base(rng, 2, K);
        const auto sq = square_smm(base);
        EXPECT_EQ(sq.size(), K * (K + 1) / 2);
    }
    const auto sq = square_smm(rq2_base_mixture(1));
    ASSERT_EQ(sq.size(), 3u);
    EXPECT_NEAR(sq[0].coeff, 0.12 * 0.12, 1e-16);
    EXPECT_NEAR(sq[1].coeff, 2 * 0.12 * -0.36, 1e-16);
    EXPECT_NEAR(sq[2].coeff, 0.36 * 0.36, 1e-16);
}

TEST(SquareSmm, PointwiseSquareOfBase) {
    RngStream rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 1 + trial % 3;
        const auto base = random_base(rng, d, 3);
        const auto sq = square_smm(base);
        for (int s = 0; s < 50; ++s) {
            const auto x = random_point(rng, d, 1.5);
            const double b = base.logdensity(x, Normalization::unnormalized).to_double();
            const double v = sq.logdensity(x, Normalization::unnormalized).to_double();
            EXPECT_LT(rel_err(v, b * b), 1e-10);
        }
    }
}

TEST(SquareSmm, NonNegativeEverywhere) {
    RngStream rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto sq = square_smm(random_base(rng, 2, 4));
        for (int s = 0; s < 200; ++s) {
            const auto x = random_point(rng, 2, 4.0);
            EXPECT_GE(sq.logdensity(x, Normalization::unnormalized).sign, 0);
        }
    }
}

TEST(SquareSmm, TargetMassesMatchOracle) {
    const auto t1 = rq2_target(1);
    EXPECT_LT(rel_err(t1.z_q().to_double(), kTarget1Z), 1e-13);
    const auto df1 = difference_form(t1);
    EXPECT_LT(rel_err(df1.z_plus(), kTarget1ZPlus), 1e-13);
    EXPECT_LT(rel_err(df1.z_minus(), kTarget1ZMinus), 1e-13);

    const auto t2 = rq2_target(2);
    EXPECT_LT(rel_err(t2.z_q().to_double(), kTarget2Z), 1e-13);
    const auto df2 = difference_form(t2);
    EXPECT_LT(rel_err(df2.z_plus(), kTarget2ZPlus), 1e-11);
    EXPECT_LT(rel_err(df2.z_minus(), kTarget2ZMinus), 1e-13);
}

TEST(SquareSmm, NormalizedDensityAtOriginMatchesOracle) {
    const double x[] = {0.0, 0.0};
    EXPECT_LT(rel_err(rq2_target(1).logdensity(x).to_double(), 0.00532081422332786), 1e-12);
    EXPECT_LT(rel_err(rq2_target(2).logdensity(x).to_double(), 0.0725198712369576), 1e-12);
}

TEST(SquareSmm, DegenerateSquareThrows) {
    // a N(0,1) - a N(0,1) squares to the zero function.
    const SignedGaussianMixture m({{1.0, 0.0, GaussianLeaf({0.0}, {1.0})}, {-1.0, 0.0, GaussianLeaf({0.0}, {1.0})}});
    EXPECT_THROW(square_smm(m), DegenerateModelError);
}

TEST(SumOfSquares, AddsMasses) {
    const auto a = rq2_target(1), b = rq2_target(2);
    const SignedGaussianMixture parts[] = {a, b};
    const auto s = sum_of_squares(parts);
    EXPECT_EQ(s.size(), a.size() + b.size());
    EXPECT_LT(rel_err(s.z_q().to_double(), kTarget1Z + kTarget2Z), 1e-13);
}

TEST(AdditiveMixture, ValidatesWeights) {
    const std::vector<GaussianLeaf> leaves{GaussianLeaf({0.0}, {1.0}), GaussianLeaf({1.0}, {1.0})};
    EXPECT_THROW(AdditiveMixture({0.5, 0.6}, leaves), InputError);
    EXPECT_THROW(AdditiveMixture({1.5, -0.5}, leaves), InputError);
    EXPECT_THROW(AdditiveMixture({1.0}, leaves), InputError);
    const AdditiveMixture m({0.25, 0.75}, leaves);
    const double x[] = {0.3};
    const double expect = 0.25 * std::exp(gaussian_logpdf(leaves[0], x)) + 0.75 * std::exp(gaussian_logpdf(leaves[1], x));
    EXPECT_NEAR(std::exp(m.logpdf(x)), expect, 1e-15);
}

TEST(DifferenceForm, AllPositiveModelHasNoNegativePart) {
    const SignedGaussianMixture m({{0.3, 0.0, GaussianLeaf({0.0}, {1.0})}, {0.7, 0.0, GaussianLeaf({2.0}, {1.0})}});
    const auto df = difference_form(m);
    EXPECT_FALSE(df.has_negative());
    EXPECT_EQ(df.log_z_minus, kNegInf);
    EXPECT_NEAR(df.plus_ratio(), 1.0, 1e-15);
}

TEST(DifferenceForm, MassesAndRatiosConsistent) {
    RngStream rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const auto sq = square_smm(random_base(rng, 2, 3));
        const auto df = difference_form(sq);
        EXPECT_NEAR(df.plus_ratio() - (df.has_negative() ? df.minus_ratio() : 0.0), 1.0, 1e-9);
        double wsum = 0.0;
        for (double w : df.positive.weights()) wsum += w;
        EXPECT_NEAR(wsum, 1.0, 1e-14);
        EXPECT_EQ(df.positive_source.size() + df.negative_source.size(), sq.size());
    }
}

TEST(DifferenceForm, TinyMassesInHighDimension) {
    // d = 64 squared mixtures have masses far below the smallest double.
    RngStream rng(31);
    const auto p = init_random_target(64, 2, rng);
    const auto df = difference_form(p);
    EXPECT_TRUE(std::isfinite(df.log_z_plus));
    EXPECT_TRUE(std::isfinite(df.plus_ratio()));
    const auto x = random_point(rng, 64, 1.0);
    const auto a = df.reconstruct_logdensity(x), b = p.logdensity(x);
    EXPECT_EQ(a.sign, b.sign);
    EXPECT_NEAR(a.log_abs, b.log_abs, 1e-9);
}
