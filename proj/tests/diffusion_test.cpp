#include "dualscore/diffusion.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace dualscore;
using namespace dualscore::diffusion;

namespace {

/// E[x | z_t] for scalar data x ~ N(mu0, s2).
Denoiser gaussian_denoiser(const DiffusionSchedule& schedule, double mu0, double s2) {
    return [&schedule, mu0, s2](std::span<const double> z, int t) {
        const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
        const double denom = ab * s2 + 1.0 - ab;
        std::vector<double> out(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) out[i] = (std::sqrt(ab) * s2 * z[i] + (1.0 - ab) * mu0) / denom;
        return out;
    };
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double variance_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
}

}  // namespace

TEST(Schedule, SingleStep) {
    const DiffusionSchedule s = build_schedule(1, 0.1, 0.1);
    ASSERT_EQ(s.steps, 1);
    EXPECT_DOUBLE_EQ(s.alpha_bar[1], 0.9);
    EXPECT_EQ(s.alpha_bar[0], 1.0);
}

TEST(Schedule, LinearThousandStepsMatchesProductOracle) {
    const DiffusionSchedule s = build_schedule(1000, 1e-4, 0.02);
    double product = 1.0;
    for (int i = 0; i < 1000; ++i) product *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 999.0);
    EXPECT_NEAR(s.alpha_bar[1000], product, 1e-10);
    EXPECT_NEAR(s.alpha_bar[1000], 4.0358297653756754e-05, 1e-10);
    EXPECT_NEAR(s.beta[1], 1e-4, 1e-18);
    EXPECT_NEAR(s.beta[1000], 0.02, 1e-18);
}

TEST(Schedule, IdentitiesAreExact) {
    const DiffusionSchedule s = build_schedule(1000, 1e-4, 0.02);
    for (int t = 1; t <= s.steps; ++t) {
        const auto i = static_cast<std::size_t>(t);
        EXPECT_EQ(s.alpha[i], 1.0 - s.beta[i]);
        EXPECT_EQ(s.alpha_bar[i], s.alpha_bar[i - 1] * s.alpha[i]);
        EXPECT_LT(s.alpha_bar[i], s.alpha_bar[i - 1]);
        EXPECT_GT(s.alpha_bar[i], 0.0);
        const double var = s.beta[i] * (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]);
        EXPECT_NEAR(s.sigma[i] * s.sigma[i], var, 1e-15);
    }
}

TEST(Schedule, MonotoneForRandomBetas) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(1e-6, 0.999);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> betas(20);
        for (double& b : betas) b = u(rng);
        const DiffusionSchedule s = schedule_from_betas(betas);
        for (int t = 1; t <= s.steps; ++t) EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
    }
}

TEST(Schedule, InvalidRangesAreConfigErrors) {
    EXPECT_THROW((void)build_schedule(10, 0.0, 0.02), ConfigError);
    EXPECT_THROW((void)build_schedule(10, 0.03, 0.02), ConfigError);
    EXPECT_THROW((void)build_schedule(10, 1e-4, 1.0), ConfigError);
    EXPECT_THROW((void)build_schedule(0, 1e-4, 0.02), ConfigError);
}

TEST(Schedule, FractionToIndex) {
    const DiffusionSchedule s = build_schedule(1000, 1e-4, 0.02);
    EXPECT_EQ(s.index_for_fraction(0.02), 20);
    EXPECT_EQ(s.index_for_fraction(0.98), 980);
    EXPECT_EQ(s.index_for_fraction(0.0), 1);
    EXPECT_EQ(s.index_for_fraction(1.5), 1000);
}

TEST(ForwardSample, NoNoiseLimits) {
    const std::vector<double> x{0.25, -1.0, 3.0};
    DiffusionSchedule clean = build_schedule(1, 0.1, 0.1);
    clean.alpha_bar[1] = 1.0;
    const std::vector<double> eps{0.7, -0.2, 1.1};
    EXPECT_EQ(forward_sample_with_noise(clean, x, 1, eps).z, x);

    const DiffusionSchedule s = build_schedule(100, 1e-4, 0.02);
    const NoisedSample zero = forward_sample_with_noise(s, x, 50, std::vector<double>(3, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(zero.z[i], std::sqrt(s.alpha_bar[50]) * x[i]);
    EXPECT_EQ(zero.t, 50);
}

TEST(ForwardSample, MonteCarloMoments) {
    const std::vector<double> beta{0.5};
    const DiffusionSchedule s = schedule_from_betas(beta);
    ASSERT_DOUBLE_EQ(s.alpha_bar[1], 0.5);
    const double x0 = 1.3;
    const std::vector<double> x(100000, x0);
    std::mt19937_64 rng(17);
    const NoisedSample n = forward_sample(s, x, 1, rng);
    const double se = std::sqrt(0.5 / x.size());
    EXPECT_NEAR(mean_of(n.z), std::sqrt(0.5) * x0, 3.0 * se);
    EXPECT_NEAR(variance_of(n.z), 0.5, 0.02 * 0.5);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(n.z[i], std::sqrt(0.5) * x0 + std::sqrt(0.5) * n.eps[i]);
}

TEST(ForwardSample, StepOutOfRangeThrows) {
    const DiffusionSchedule s = build_schedule(10, 1e-4, 0.02);
    std::mt19937_64 rng(0);
    EXPECT_THROW((void)forward_sample(s, std::vector<double>{1.0}, 0, rng), Error);
    EXPECT_THROW((void)forward_sample(s, std::vector<double>{1.0}, 11, rng), Error);
}

TEST(PosteriorMean, HandEvaluatedTwoStepCase) {
    const std::vector<double> betas{0.1, 0.2};
    const DiffusionSchedule s = schedule_from_betas(betas);
    const auto mu = posterior_mean(s, std::vector<double>{1.0}, 2, std::vector<double>{0.5});
    ASSERT_EQ(mu.size(), 1u);
    EXPECT_NEAR(mu[0], 0.658254, 1e-6);
    const PosteriorCoefficients c = posterior_coefficients(s, 2);
    EXPECT_NEAR(c.x_hat, 0.6776309271789387, 1e-12);
    EXPECT_NEAR(c.z_t, 0.31943828249996997, 1e-12);
}

TEST(PosteriorMean, FixedPointWhenCoefficientsSumToOne) {
    // The coefficient sum is 1 only for t = 1, where alpha_bar_0 = 1.
    const DiffusionSchedule s = build_schedule(1, 0.3, 0.3);
    const PosteriorCoefficients c = posterior_coefficients(s, 1);
    EXPECT_NEAR(c.x_hat + c.z_t, 1.0, 1e-15);
    const std::vector<double> z{0.4, -2.0, 7.5};
    const auto mu = posterior_mean(s, z, 1, z);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(mu[i], z[i], 1e-12);
}

TEST(PosteriorMean, LinearInInputs) {
    const DiffusionSchedule s = build_schedule(50, 1e-3, 0.05);
    const std::vector<double> z1{0.3, -0.7}, z2{1.1, 0.2}, x1{-0.4, 0.9}, x2{0.6, 0.1};
    const auto a = posterior_mean(s, z1, 30, x1);
    const auto b = posterior_mean(s, z2, 30, x2);
    const auto ab = posterior_mean(s, std::vector<double>{2.0 * z1[0] + z2[0], 2.0 * z1[1] + z2[1]}, 30,
                                   std::vector<double>{2.0 * x1[0] + x2[0], 2.0 * x1[1] + x2[1]});
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(ab[i], 2.0 * a[i] + b[i], 1e-12);
}

TEST(Cfg, GuidanceScaleIdentities) {
    const std::vector<double> c{0.6, -0.25, 1.0}, u{0.5, 0.75, 0.0};
    EXPECT_EQ(cfg_combine(c, u, 1.0), c);
    EXPECT_EQ(cfg_combine(c, u, 0.0), u);
    EXPECT_DOUBLE_EQ(cfg_combine(std::vector<double>{0.6}, std::vector<double>{0.5}, 50.0)[0], 5.5);
    EXPECT_DOUBLE_EQ(cfg_combine(std::vector<double>{0.6}, std::vector<double>{0.5}, 3.0)[0], 0.8);
    const auto once = cfg_combine(c, u, 50.0);
    EXPECT_EQ(cfg_combine(once, u, 1.0), once);
    EXPECT_THROW((void)cfg_combine(c, std::vector<double>{1.0}, 2.0), Error);
}

TEST(DdpmLoss, PerfectAndOffsetDenoisers) {
    const DiffusionSchedule s = build_schedule(100, 1e-4, 0.02);
    std::mt19937_64 rng(1);
    const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
    const Weighting one = [](int) { return 1.0; };
    const Denoiser perfect = [&x](std::span<const double>, int) { return x; };
    EXPECT_EQ(ddpm_loss(s, perfect, x, 40, rng, one), 0.0);
    const Denoiser offset = [&x](std::span<const double>, int) {
        std::vector<double> out = x;
        for (double& v : out) v += 1.0;
        return out;
    };
    EXPECT_DOUBLE_EQ(ddpm_loss(s, offset, x, 40, rng, one), 4.0);
}

TEST(DdpmLoss, GaussianDenoiserMatchesPosteriorVariance) {
    const DiffusionSchedule s = build_schedule(1000, 1e-4, 0.02);
    const double mu0 = 2.0, s2 = 0.25;
    const Denoiser d = gaussian_denoiser(s, mu0, s2);
    const Weighting one = [](int) { return 1.0; };
    std::mt19937_64 rng(23);
    std::normal_distribution<double> data(mu0, std::sqrt(s2));
    for (int t : {100, 400, 900}) {
        const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
        const double expected = s2 * (1.0 - ab) / (ab * s2 + 1.0 - ab);
        double total = 0.0;
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) total += ddpm_loss(s, d, std::vector<double>{data(rng)}, t, rng, one);
        EXPECT_NEAR(total / draws, expected, 0.03 * expected) << "t = " << t;
    }
}

TEST(ReverseSample, GaussianDenoiserRecoversDataMoments) {
    const DiffusionSchedule s = build_schedule(1000, 1e-4, 0.02);
    std::mt19937_64 rng(31);
    const auto samples = reverse_sample(s, gaussian_denoiser(s, 2.0, 0.25), 10000, rng);
    EXPECT_NEAR(mean_of(samples), 2.0, 0.05);
    EXPECT_NEAR(variance_of(samples), 0.25, 0.05 * 0.25);
}

TEST(ReverseSample, ZeroDenoiserContracts) {
    const DiffusionSchedule s = build_schedule(1000, 1e-4, 0.02);
    std::mt19937_64 rng(2);
    const Denoiser zero = [](std::span<const double> z, int) { return std::vector<double>(z.size(), 0.0); };
    const auto samples = reverse_sample(s, zero, 2000, rng);
    EXPECT_LT(std::abs(mean_of(samples)), 0.1);
}

TEST(ReverseSample, DeterministicForSeed) {
    const DiffusionSchedule s = build_schedule(200, 1e-4, 0.02);
    std::mt19937_64 a(5), b(5);
    const Denoiser d = gaussian_denoiser(s, -1.0, 0.5);
    EXPECT_EQ(reverse_sample(s, d, 64, a), reverse_sample(s, d, 64, b));
}
