#include "dualscore/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dualscore::diffusion {

int DiffusionSchedule::index_for_fraction(double fraction) const {
    const long idx = std::lround(fraction * steps);
    return static_cast<int>(std::clamp<long>(idx, 1, steps));
}

void DiffusionSchedule::check_step(int t) const {
    if (t < 1 || t > steps) {
        std::ostringstream os;
        os << "diffusion: step " << t << " outside [1, " << steps << "]";
        throw Error(os.str());
    }
}

DiffusionSchedule schedule_from_betas(std::span<const double> betas) {
    if (betas.empty()) throw ConfigError("diffusion: schedule needs at least one step");
    DiffusionSchedule s;
    s.steps = static_cast<int>(betas.size());
    s.beta.assign(betas.size() + 1, 0.0);
    s.alpha.assign(betas.size() + 1, 1.0);
    s.alpha_bar.assign(betas.size() + 1, 1.0);
    s.sigma.assign(betas.size() + 1, 0.0);
    for (std::size_t t = 1; t <= betas.size(); ++t) {
        const double b = betas[t - 1];
        if (!(b > 0.0 && b < 1.0)) throw ConfigError("diffusion: every beta must lie in (0, 1)");
        s.beta[t] = b;
        s.alpha[t] = 1.0 - b;
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        s.sigma[t] = std::sqrt(b * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]));
    }
    return s;
}

DiffusionSchedule build_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("diffusion: schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("diffusion: require 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
    }
    return schedule_from_betas(betas);
}

NoisedSample forward_sample_with_noise(const DiffusionSchedule& schedule, std::span<const double> x, int t,
                                       std::span<const double> eps) {
    schedule.check_step(t);
    if (eps.size() != x.size()) throw Error("forward_sample: noise shape mismatch");
    const double a = std::sqrt(schedule.alpha_bar[static_cast<std::size_t>(t)]);
    const double b = std::sqrt(1.0 - schedule.alpha_bar[static_cast<std::size_t>(t)]);
    NoisedSample out;
    out.t = t;
    out.eps.assign(eps.begin(), eps.end());
    out.z.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out.z[i] = a * x[i] + b * eps[i];
    return out;
}

NoisedSample forward_sample(const DiffusionSchedule& schedule, std::span<const double> x, int t,
                            std::mt19937_64& rng) {
    schedule.check_step(t);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> eps(x.size());
    for (double& e : eps) e = normal(rng);
    return forward_sample_with_noise(schedule, x, t, eps);
}

PosteriorCoefficients posterior_coefficients(const DiffusionSchedule& schedule, int t) {
    schedule.check_step(t);
    const auto ti = static_cast<std::size_t>(t);
    const double denom = 1.0 - schedule.alpha_bar[ti];
    if (denom < 1e-12) throw Error("posterior_mean: 1 - alpha_bar_t is too small to divide by");
    const double ab_prev = schedule.alpha_bar[ti - 1];
    return {std::sqrt(ab_prev) * schedule.beta[ti] / denom,
            std::sqrt(1.0 - schedule.beta[ti]) * (1.0 - ab_prev) / denom};
}

std::vector<double> posterior_mean(const DiffusionSchedule& schedule, std::span<const double> z_t, int t,
                                   std::span<const double> x_hat) {
    if (z_t.size() != x_hat.size()) throw Error("posterior_mean: shape mismatch");
    const PosteriorCoefficients c = posterior_coefficients(schedule, t);
    std::vector<double> mu(z_t.size());
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = c.x_hat * x_hat[i] + c.z_t * z_t[i];
    return mu;
}

std::vector<double> cfg_combine(std::span<const double> x_cond, std::span<const double> x_uncond, double gamma) {
    if (x_cond.size() != x_uncond.size()) throw Error("cfg_combine: shape mismatch");
    std::vector<double> out(x_cond.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gamma * x_cond[i] + (1.0 - gamma) * x_uncond[i];
    return out;
}

double ddpm_loss(const DiffusionSchedule& schedule, const Denoiser& denoiser, std::span<const double> x, int t,
                 std::mt19937_64& rng, const Weighting& w) {
    const NoisedSample s = forward_sample(schedule, x, t, rng);
    const std::vector<double> pred = denoiser(s.z, t);
    if (pred.size() != x.size()) throw Error("ddpm_loss: denoiser changed the sample shape");
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - pred[i]) * (x[i] - pred[i]);
    return w(t) * sq;
}

std::vector<double> reverse_sample(const DiffusionSchedule& schedule, const Denoiser& denoiser, std::size_t size,
                                   std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> z(size);
    for (double& v : z) v = normal(rng);
    for (int t = schedule.steps; t >= 1; --t) {
        const std::vector<double> x_hat = denoiser(z, t);
        if (x_hat.size() != size) throw Error("reverse_sample: denoiser changed the sample shape");
        z = posterior_mean(schedule, z, t, x_hat);
        if (t > 1) {
            const double s = schedule.sigma[static_cast<std::size_t>(t)];
            for (double& v : z) v += s * normal(rng);
        }
    }
    return z;
}

}  // namespace dualscore::diffusion
