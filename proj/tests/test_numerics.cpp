#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>

#include "adaterm/framing.hpp"
#include "adaterm/numerics.hpp"

using namespace adaterm;

TEST(DenseArray, ShapeAndData) {
    DenseArray a({2, 3}, 1.5);
    EXPECT_EQ(a.size(), 6u);
    EXPECT_EQ(a.rank(), 2u);
    a.at(1, 2) = 4.0;
    EXPECT_EQ(a[5], 4.0);
    const auto b = a.reshaped({3, 2});
    EXPECT_EQ(b.at(2, 1), 4.0);
    EXPECT_EQ(a.flattened().shape(), std::vector<std::size_t>{6});
}

TEST(DenseArray, RejectsBadShapes) {
    EXPECT_THROW(DenseArray({2, 0}), ParameterError);
    EXPECT_THROW(DenseArray({2, 2}, std::vector<double>{1, 2, 3}), ParameterError);
    DenseArray a({2}), b({3});
    EXPECT_THROW(a += b, ParameterError);
}

TEST(DenseArray, Arithmetic) {
    auto a = DenseArray::vector({1, 2, 3});
    auto b = DenseArray::vector({0.5, 0.5, 0.5});
    a += b;
    a *= 2.0;
    a -= b;
    EXPECT_EQ(a, DenseArray::vector({2.5, 4.5, 6.5}));
    EXPECT_EQ(a.map([](double x) { return -x; })[0], -2.5);
}

TEST(Rng, DeterministicAndForkIndependent) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    Rng f1 = Rng(42).fork(1), f2 = Rng(42).fork(2), f1b = Rng(42).fork(1);
    EXPECT_NE(f1.next_u64(), f2.next_u64());
    f1 = Rng(42).fork(1);
    EXPECT_EQ(f1.next_u64(), f1b.next_u64());
}

TEST(Rng, UniformOpenInterval) {
    Rng r(3);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform(-0.1, 0.1);
        ASSERT_GT(u, -0.1);
        ASSERT_LT(u, 0.1);
    }
}

TEST(Rng, NormalMoments) {
    Rng r(7);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, GammaMean) {
    Rng r(11);
    for (double k : {0.5, 1.0, 3.5}) {
        double s = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) s += r.gamma(k);
        EXPECT_NEAR(s / n, k, 0.03 * std::max(1.0, k));
    }
}

TEST(StudentT, CauchyKolmogorovSmirnov) {
    Rng r(5);
    const int n = 100000;
    std::vector<double> xs(n);
    for (auto& x : xs) x = sample_student_t(r, 1.0, 0.0, 1.0);
    std::sort(xs.begin(), xs.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        const double cdf = std::atan(xs[i]) / std::numbers::pi + 0.5;
        ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
    }
    EXPECT_LT(ks, 0.02);
}

TEST(StudentT, LocationEquivariance) {
    Rng a(9), b(9);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_DOUBLE_EQ(sample_student_t(a, 3.0, 5.0, 2.0), sample_student_t(b, 3.0, 0.0, 2.0) + 5.0);
    }
}

TEST(StudentT, GaussianLimit) {
    Rng r(13);
    const int n = 1000000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = sample_student_t(r, 1e6, 2.0, 3.0);
        s += x;
        s2 += x * x;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, 2.0, 0.02);
    EXPECT_NEAR(std::sqrt(var), 3.0, 0.03);
}

TEST(StudentT, RejectsBadParameters) {
    Rng r(1);
    EXPECT_THROW(sample_student_t(r, 0.0, 0.0, 1.0), ParameterError);
    EXPECT_THROW(sample_student_t(r, 1.0, 0.0, -1.0), ParameterError);
}

TEST(Bernoulli, MaskEdgesAndFraction) {
    Rng r(17);
    auto none = sample_bernoulli_mask(r, 1000, 0.0);
    auto all = sample_bernoulli_mask(r, 1000, 1.0);
    EXPECT_EQ(std::count(none.begin(), none.end(), true), 0);
    EXPECT_EQ(std::count(all.begin(), all.end(), true), 1000);
    auto mask = sample_bernoulli_mask(r, 100000, 0.3);
    const double frac = std::count(mask.begin(), mask.end(), true) / 1e5;
    EXPECT_NEAR(frac, 0.3, 0.01);
    EXPECT_THROW(sample_bernoulli_mask(r, 10, 1.5), ParameterError);
}

TEST(Digamma, FrozenValues) {
    // 30-digit reference evaluations.
    const std::pair<double, double> cases[] = {
        {1e-3, -1000.5755719318102797}, {0.1, -10.423754940411076232}, {0.5, -1.9635100260214234794},
        {1.0, -0.57721566490153286061}, {2.5, 0.70315664064524318723}, {6.0, 1.7061176684318004727},
        {7.3, 1.9178203356379860723},   {30.0, 3.3844381326855248766}, {1e4, 9.2102903711428494036},
    };
    for (auto [x, want] : cases) EXPECT_NEAR(digamma(x), want, 1e-13 * std::max(1.0, std::abs(want))) << x;
    EXPECT_NEAR(digamma(2.0), 1.0 - 0.57721566490153286061, 1e-14);
}

TEST(Digamma, MatchesBoost) {
    for (int i = 0; i <= 2000; ++i) {
        const double x = std::pow(10.0, -2.0 + 6.0 * i / 2000.0);
        const double want = boost::math::digamma(x);
        ASSERT_NEAR(digamma(x), want, 1e-12 * std::max(1.0, std::abs(want))) << x;
    }
}

TEST(Digamma, BoundSandwich) {
    for (int i = 0; i < 10000; ++i) {
        const double x = std::pow(10.0, -2.0 + 6.0 * i / 9999.0);
        const double p = digamma(x);
        ASSERT_LE(std::log(x) - 1.0 / x, p) << x;
        ASSERT_LE(p, std::log(x) - 0.5 / x) << x;
    }
}

TEST(Digamma, DomainError) {
    EXPECT_THROW(digamma(0.0), DomainError);
    EXPECT_THROW(digamma(-1.0), DomainError);
}

TEST(Framing, RoundTripAndCorruption) {
    const framing::Magic magic = framing::make_magic("TEST");
    framing::Frame f{magic, 3, std::uint8_t{7}, {1.0, -2.5, 1e-300}};
    const auto bytes = framing::encode(f);
    EXPECT_EQ(bytes.size(), 4u + 1 + 1 + 8 + 24);
    const auto back = framing::decode(bytes, magic, 3, true);
    EXPECT_EQ(back.payload, f.payload);
    EXPECT_EQ(*back.tag, 7);

    EXPECT_THROW(framing::decode(bytes, framing::make_magic("NOPE"), 3, true), ParameterError);
    EXPECT_THROW(framing::decode(bytes, magic, 4, true), ParameterError);
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(framing::decode(truncated, magic, 3, true), ParameterError);
    auto extended = bytes;
    extended.push_back(0);
    EXPECT_THROW(framing::decode(extended, magic, 3, true), ParameterError);
}
