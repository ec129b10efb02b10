#include "dualscore/distill.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dualscore::distill {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError("distill config: " + message);
}

double lerp_clamped(double a, double b, int step, int span) {
    if (span <= 0) return b;
    const double f = std::min(1.0, static_cast<double>(step) / span);
    return a + (b - a) * f;
}

std::vector<double> draw_normals(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(n);
    for (double& v : out) v = normal(rng);
    return out;
}

Image noised_image(const diffusion::DiffusionSchedule& schedule, const Image& x, int t, const std::vector<double>& eps) {
    Image z(x.width, x.height, x.channels);
    z.data = diffusion::forward_sample_with_noise(schedule, x.data, t, eps).z;
    return z;
}

Image guided(const Image& cond, const Image& uncond, double gamma) {
    Image out(cond.width, cond.height, cond.channels);
    out.data = diffusion::cfg_combine(cond.data, uncond.data, gamma);
    return out;
}

// Accumulates sum of squares of (x - target) and checks finiteness.
double squared_residual(const Image& x, const Image& target, const char* path, int step) {
    if (!x.same_shape(target)) throw Error(std::string("distill: ") + path + " path prediction has the wrong shape");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x.data[i] - target.data[i];
        if (!std::isfinite(r)) {
            std::ostringstream os;
            os << "distill: non-finite residual on the " << path << " path at step " << step;
            throw Error(os.str());
        }
        s += r * r;
    }
    return s;
}

renderer::QuadratureConfig training_quadrature(const DistillationConfig& config, std::uint64_t seed) {
    renderer::QuadratureConfig q;
    q.samples = config.samples_per_ray;
    q.jitter = true;
    q.seed = seed;
    return q;
}

}  // namespace

void DistillationConfig::validate() const {
    require(total_steps >= 0, "total_steps must be >= 0");
    require(std::isfinite(lambda_text) && lambda_text >= 0.0, "lambda_text must be finite and >= 0");
    require(std::isfinite(lambda_image) && lambda_image >= 0.0, "lambda_image must be finite and >= 0");
    require(std::isfinite(gamma_text) && std::isfinite(gamma_image), "guidance scales must be finite");
    for (double v : {t_min_start, t_min_end, t_max_start, t_max_end})
        require(v >= 0.0 && v <= 1.0, "timestep fractions must lie in [0, 1]");
    require(t_min_start < t_max_start && t_min_end < t_max_end, "t_min must stay below t_max");
    require(anneal_steps >= 0, "anneal_steps must be >= 0");
    require(switch_step >= 0, "switch_step must be >= 0");
    require(resolution_start >= 1 && resolution_end >= 1, "resolutions must be >= 1");
    require(batch_text_start >= 1 && batch_text_end >= 1, "text batch sizes must be >= 1");
    require(batch_image_start >= 1 && batch_image_end >= 1, "image batch sizes must be >= 1");
    require(views_per_set >= 1, "views_per_set must be >= 1");
    require(samples_per_ray >= 1, "samples_per_ray must be >= 1");
    require(std::isfinite(clip_norm), "clip_norm must be finite");
    require(diffusion_steps >= 1, "diffusion_steps must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, "require 0 < beta_start <= beta_end < 1");
    require(optimizer.lr_grid >= 0.0 && optimizer.lr_mlp >= 0.0, "learning rates must be >= 0");
    require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0,
            "Adam betas must lie in [0, 1)");
    require(optimizer.eps > 0.0 && optimizer.weight_decay >= 0.0, "Adam eps must be > 0 and weight decay >= 0");
    views.validate();
    field.validate();
}

ScheduleState schedule_at(const DistillationConfig& config, int step) {
    ScheduleState s;
    s.t_max = lerp_clamped(config.t_max_start, config.t_max_end, step, config.anneal_steps);
    s.t_min = lerp_clamped(config.t_min_start, config.t_min_end, step, config.anneal_steps);
    const bool late = step >= config.switch_step;
    s.resolution = late ? config.resolution_end : config.resolution_start;
    s.batch_text = late ? config.batch_text_end : config.batch_text_start;
    s.batch_image = late ? config.batch_image_end : config.batch_image_start;
    return s;
}

void sds_gradient(const field::RadianceField& field, const renderer::RenderedView& view, const Image& denoised,
                  double weight, field::ParamGradient& grad) {
    if (!view.rgb.same_shape(denoised)) throw Error("sds_gradient: denoised image shape does not match the render");
    if (weight == 0.0) return;
    Image pixel_grad(denoised.width, denoised.height, denoised.channels);
    for (std::size_t i = 0; i < pixel_grad.size(); ++i)
        pixel_grad.data[i] = weight * (view.rgb.data[i] - denoised.data[i]);
    renderer::render_backward(field, view, pixel_grad, grad);
}

field::ParamGradient sds_gradient(const field::RadianceField& field, const renderer::RenderedView& view,
                                  const Image& denoised, double weight) {
    field::ParamGradient grad = field.zero_gradient();
    sds_gradient(field, view, denoised, weight, grad);
    return grad;
}

StepResult combined_step(const field::RadianceField& field, const ScoreProviders& providers,
                         const DistillationConfig& config, int step, std::mt19937_64& rng) {
    if (!providers.text || !providers.image) throw Error("combined_step: both score providers are required");
    if (step < 0 || step >= config.total_steps) throw Error("combined_step: step outside [0, total_steps)");

    const ScheduleState sched = schedule_at(config, step);
    const diffusion::DiffusionSchedule diff =
        diffusion::build_schedule(config.diffusion_steps, config.beta_start, config.beta_end);
    camera::ViewSamplingConfig views = config.views;
    views.resolution = {sched.resolution, sched.resolution};
    const std::size_t image_values = static_cast<std::size_t>(sched.resolution) * sched.resolution * 3;

    // All random draws happen up front in a fixed order.
    std::vector<camera::CameraPose> refs;
    while (static_cast<int>(refs.size()) < sched.batch_text) {
        const int n = std::min(config.views_per_set, sched.batch_text - static_cast<int>(refs.size()));
        for (auto& p : camera::sample_reference_views(rng, n, views)) refs.push_back(std::move(p));
    }
    std::vector<std::uint64_t> ref_seeds(refs.size());
    for (auto& s : ref_seeds) s = rng();
    std::uniform_real_distribution<double> t_dist(sched.t_min, sched.t_max);
    const int t_text = diff.index_for_fraction(t_dist(rng));
    std::vector<std::vector<double>> text_noise;
    for (std::size_t k = 0; k < refs.size(); ++k) text_noise.push_back(draw_normals(rng, image_values));

    struct PairDraw {
        std::size_t ref = 0;
        camera::NovelViewPair pair;
        std::uint64_t seed = 0;
        int t = 0;
        std::vector<double> noise;
    };
    std::vector<PairDraw> pairs(static_cast<std::size_t>(sched.batch_image));
    std::uniform_int_distribution<std::size_t> ref_dist(0, refs.size() - 1);
    for (PairDraw& p : pairs) {
        p.ref = ref_dist(rng);
        p.pair = camera::sample_novel_view_pair(rng, refs[p.ref], views);
        p.seed = rng();
        p.t = diff.index_for_fraction(t_dist(rng));
        p.noise = draw_normals(rng, image_values);
    }

    StepResult result;
    result.text = field.zero_gradient();
    result.image = field.zero_gradient();
    result.report.step = step;
    result.report.schedule = sched;
    result.report.t_text = t_text;

    std::vector<renderer::RenderedView> ref_views;
    ref_views.reserve(refs.size());
    for (std::size_t k = 0; k < refs.size(); ++k)
        ref_views.push_back(renderer::render(field, refs[k], training_quadrature(config, ref_seeds[k])));

    // Text-conditioned multi-view path.
    {
        std::vector<Image> z;
        for (std::size_t k = 0; k < refs.size(); ++k) z.push_back(noised_image(diff, ref_views[k].rgb, t_text, text_noise[k]));
        const scores::TextCondition cond{refs};
        const std::vector<Image> cond_pred = providers.text->denoise(z, t_text, cond);
        const std::vector<Image> uncond_pred = providers.text->denoise_unconditional(z, t_text, cond);
        if (cond_pred.size() != refs.size() || uncond_pred.size() != refs.size())
            throw Error("distill: text provider returned the wrong number of views");
        const double w = config.weighting ? config.weighting(t_text) : 1.0;
        double ss_cond = 0.0, ss_guided = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < refs.size(); ++k) {
            const Image target = guided(cond_pred[k], uncond_pred[k], config.gamma_text);
            ss_cond += squared_residual(ref_views[k].rgb, cond_pred[k], "text", step);
            ss_guided += squared_residual(ref_views[k].rgb, target, "text", step);
            count += target.size();
            if (config.lambda_text != 0.0)
                sds_gradient(field, ref_views[k], target, w / static_cast<double>(refs.size()), result.text);
        }
        result.report.sds_text_residual_norm = std::sqrt(ss_cond / static_cast<double>(count));
        result.report.sds_text_guided_norm = std::sqrt(ss_guided / static_cast<double>(count));
    }

    // Image-conditioned novel-view path.
    if (config.lambda_image != 0.0) {
        double ss_cond = 0.0, ss_guided = 0.0;
        std::size_t count = 0;
        for (const PairDraw& p : pairs) {
            const renderer::RenderedView target_view =
                renderer::render(field, p.pair.target, training_quadrature(config, p.seed));
            const Image z = noised_image(diff, target_view.rgb, p.t, p.noise);
            const scores::ImageCondition cond{&ref_views[p.ref].rgb, refs[p.ref], p.pair.relative};
            const Image cond_pred = providers.image->denoise(z, p.t, cond, p.pair.target);
            const Image uncond_pred = providers.image->denoise_unconditional(z, p.t, cond, p.pair.target);
            const Image target = guided(cond_pred, uncond_pred, config.gamma_image);
            ss_cond += squared_residual(target_view.rgb, cond_pred, "image", step);
            ss_guided += squared_residual(target_view.rgb, target, "image", step);
            count += target.size();
            const double w = config.weighting ? config.weighting(p.t) : 1.0;
            sds_gradient(field, target_view, target, w / static_cast<double>(pairs.size()), result.image);
        }
        result.report.sds_image_residual_norm = std::sqrt(ss_cond / static_cast<double>(count));
        result.report.sds_image_guided_norm = std::sqrt(ss_guided / static_cast<double>(count));
    }

    result.combined = field.zero_gradient();
    for (std::size_t i = 0; i < result.combined.size(); ++i)
        result.combined.values[i] = config.lambda_text * result.text.values[i] + config.lambda_image * result.image.values[i];
    result.report.grad_norm = result.combined.norm();
    return result;
}

bool clip_gradient(field::ParamGradient& grad, double max_norm) {
    if (max_norm <= 0.0) return false;
    const double n = grad.norm();
    if (!(n > max_norm)) return false;
    grad *= max_norm / n;
    return true;
}

RunResult run(const ScoreProviders& providers, const DistillationConfig& config, const RunSinks& sinks) {
    config.validate();
    field::FieldConfig fc = config.field;
    fc.seed = config.seed;
    RunResult result{field::RadianceField(fc), {}};
    field::RadianceField& field = result.field;
    field::AdamWState state(field.layout().total);
    std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

    const auto due = [&](int every, int done) {
        return every > 0 && (done % every == 0 || done == config.total_steps);
    };
    for (int step = 0; step < config.total_steps; ++step) {
        StepResult sr = combined_step(field, providers, config, step, rng);
        sr.report.clipped = clip_gradient(sr.combined, config.clip_norm);
        field::apply_adamw_step(field, sr.combined, state, config.optimizer);
        for (double v : field.params())
            if (!std::isfinite(v)) {
                std::ostringstream os;
                os << "distill: field parameters became non-finite at step " << step;
                throw Error(os.str());
            }
        result.reports.push_back(sr.report);
        if (sinks.on_step) sinks.on_step(sr.report);
        const int done = step + 1;
        if (sinks.on_snapshot && due(sinks.snapshot_every, done)) sinks.on_snapshot(done, field);
        if (sinks.on_checkpoint && due(sinks.checkpoint_every, done)) sinks.on_checkpoint(done, field);
    }
    return result;
}

}  // namespace dualscore::distill
