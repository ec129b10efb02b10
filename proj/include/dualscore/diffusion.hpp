#pragma once

#include "dualscore/common.hpp"

#include <functional>
#include <random>
#include <span>
#include <vector>

namespace dualscore::diffusion {

/// Noise schedule tables indexed by step t in [1, T]; index 0 holds the
/// clean-data convention alpha_bar[0] = 1, beta[0] = 0.
struct DiffusionSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> sigma;  // posterior standard deviation

    /// Step index for a continuous fraction in [0, 1]: round(frac * T) clamped to [1, T].
    [[nodiscard]] int index_for_fraction(double fraction) const;
    void check_step(int t) const;
};

/// Linear beta schedule from beta_start to beta_end over `steps` steps.
[[nodiscard]] DiffusionSchedule build_schedule(int steps, double beta_start, double beta_end);

/// Schedule from explicit betas (index 1..T given as betas[0..T-1]).
[[nodiscard]] DiffusionSchedule schedule_from_betas(std::span<const double> betas);

struct NoisedSample {
    std::vector<double> z;
    int t = 0;
    std::vector<double> eps;
};

/// z_t = sqrt(alpha_bar_t) x + sqrt(1 - alpha_bar_t) eps with eps ~ N(0, I).
[[nodiscard]] NoisedSample forward_sample(const DiffusionSchedule& schedule, std::span<const double> x, int t,
                                          std::mt19937_64& rng);

/// Same as forward_sample with a caller-provided noise draw.
[[nodiscard]] NoisedSample forward_sample_with_noise(const DiffusionSchedule& schedule, std::span<const double> x,
                                                     int t, std::span<const double> eps);

/// Mean of q(z_{t-1} | z_t, x = x_hat) using cumulative products.
[[nodiscard]] std::vector<double> posterior_mean(const DiffusionSchedule& schedule, std::span<const double> z_t,
                                                 int t, std::span<const double> x_hat);

struct PosteriorCoefficients {
    double x_hat = 0.0;
    double z_t = 0.0;
};
[[nodiscard]] PosteriorCoefficients posterior_coefficients(const DiffusionSchedule& schedule, int t);

/// gamma * x_cond + (1 - gamma) * x_uncond, elementwise.
[[nodiscard]] std::vector<double> cfg_combine(std::span<const double> x_cond, std::span<const double> x_uncond,
                                              double gamma);

/// Predicts the clean signal from z_t at step t.
using Denoiser = std::function<std::vector<double>(std::span<const double> z_t, int t)>;
using Weighting = std::function<double(int t)>;

/// One Monte-Carlo draw of w(t) * ||x - denoiser(z_t, t)||^2.
[[nodiscard]] double ddpm_loss(const DiffusionSchedule& schedule, const Denoiser& denoiser, std::span<const double> x,
                               int t, std::mt19937_64& rng, const Weighting& w);

/// Ancestral sampling from z_T ~ N(0, I) down to t = 1 (no noise on the last step).
[[nodiscard]] std::vector<double> reverse_sample(const DiffusionSchedule& schedule, const Denoiser& denoiser,
                                                 std::size_t size, std::mt19937_64& rng);

}  // namespace dualscore::diffusion
