#pragma once

#include "dualscore/camera.hpp"
#include "dualscore/common.hpp"
#include "dualscore/diffusion.hpp"
#include "dualscore/field.hpp"
#include "dualscore/renderer.hpp"
#include "dualscore/scores.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace dualscore::distill {

struct DistillationConfig {
    int total_steps = 10000;
    double lambda_text = 1.0;
    double lambda_image = 1.0;
    double gamma_text = 50.0;
    double gamma_image = 3.0;

    // Timestep range as fractions of the diffusion horizon, annealed linearly
    // from *_start to *_end over the first anneal_steps steps.
    double t_max_start = 0.98;
    double t_max_end = 0.5;
    double t_min_start = 0.02;
    double t_min_end = 0.02;
    int anneal_steps = 8000;

    // Resolution and batch sizes switch from *_start to *_end at switch_step.
    int switch_step = 5000;
    int resolution_start = 64;
    int resolution_end = 256;
    int batch_text_start = 8;   // reference views
    int batch_text_end = 4;
    int batch_image_start = 12;  // (reference, target) pairs
    int batch_image_end = 4;
    int views_per_set = 4;       // reference views sharing one orthogonal set

    int samples_per_ray = 64;
    double clip_norm = 10.0;     // global gradient norm; <= 0 disables clipping
    std::uint64_t seed = 0;

    int diffusion_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    camera::ViewSamplingConfig views;
    field::FieldConfig field;
    field::AdamWConfig optimizer;
    /// SDS weighting w(t); empty means w(t) = 1.
    diffusion::Weighting weighting;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct ScheduleState {
    double t_min = 0.0;
    double t_max = 0.0;
    int resolution = 0;
    int batch_text = 0;
    int batch_image = 0;

    bool operator==(const ScheduleState&) const = default;
};

[[nodiscard]] ScheduleState schedule_at(const DistillationConfig& config, int step);

struct StepReport {
    int step = 0;
    // RMS of (x - x_hat_cond) over every pixel of the path, before guidance.
    double sds_text_residual_norm = 0.0;
    double sds_image_residual_norm = 0.0;
    // RMS of (x - x_tilde) after classifier-free guidance.
    double sds_text_guided_norm = 0.0;
    double sds_image_guided_norm = 0.0;
    double grad_norm = 0.0;  // combined gradient before clipping
    bool clipped = false;
    int t_text = 0;          // diffusion index shared by the reference batch
    ScheduleState schedule;
};

struct ScoreProviders {
    const scores::MultiviewScoreProvider* text = nullptr;
    const scores::NovelViewScoreProvider* image = nullptr;
};

/// Adds weight * sum over pixels of (x - denoised) . dx/dphi into `grad`.
/// The denoised image is treated as a constant.
void sds_gradient(const field::RadianceField& field, const renderer::RenderedView& view, const Image& denoised,
                  double weight, field::ParamGradient& grad);
[[nodiscard]] field::ParamGradient sds_gradient(const field::RadianceField& field, const renderer::RenderedView& view,
                                                const Image& denoised, double weight);

struct StepResult {
    field::ParamGradient text;      // unscaled text-path gradient (zero when lambda_text == 0)
    field::ParamGradient image;     // unscaled image-path gradient (zero when lambda_image == 0)
    field::ParamGradient combined;  // lambda_text * text + lambda_image * image, unclipped
    StepReport report;
};

/// One dual-score step. Every random draw is made regardless of the lambdas,
/// so runs that differ only in lambdas see identical poses, timesteps and noise.
[[nodiscard]] StepResult combined_step(const field::RadianceField& field, const ScoreProviders& providers,
                                       const DistillationConfig& config, int step, std::mt19937_64& rng);

struct RunSinks {
    std::function<void(const StepReport&)> on_step;
    int snapshot_every = 0;  // <= 0 disables; also fires after the final step
    std::function<void(int step, const field::RadianceField&)> on_snapshot;
    int checkpoint_every = 0;
    std::function<void(int step, const field::RadianceField&)> on_checkpoint;
};

struct RunResult {
    field::RadianceField field;
    std::vector<StepReport> reports;
};

/// Full optimization loop. The field is initialized from config.field with
/// its seed replaced by config.seed.
[[nodiscard]] RunResult run(const ScoreProviders& providers, const DistillationConfig& config,
                            const RunSinks& sinks = {});

/// Clip `grad` to `max_norm` in place; returns true when scaling was applied.
bool clip_gradient(field::ParamGradient& grad, double max_norm);

}  // namespace dualscore::distill
