#include "dualscore/cli.hpp"
#include "dualscore/config.hpp"
#include "dualscore/diffusion.hpp"
#include "dualscore/distill.hpp"
#include "dualscore/mesh.hpp"
#include "dualscore/metrics.hpp"
#include "dualscore/scores.hpp"

#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

using namespace dualscore;
using dualscore::testutil::source_path;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fixed(double v, int digits = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

class Ball final : public renderer::Medium {
public:
    Ball(double radius, double sigma) : radius_(radius), sigma_(sigma) {}
    void evaluate(std::span<const Vec3> points, std::span<const Vec3>, std::span<double> density,
                  std::span<Vec3> color) const override {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const bool in = points[i].norm() <= radius_;
            density[i] = in ? sigma_ : 0.0;
            color[i] = in ? Vec3(0.2, 0.4, 0.6) : Vec3::Zero();
        }
    }

private:
    double radius_, sigma_;
};

void ac1(Verdict& v) {
    const auto start = std::chrono::steady_clock::now();
    std::size_t checked = 0, failures = 0;
    double worst = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const testutil::FdReport r = testutil::render_gradient_check(seed);
        checked += r.checked;
        failures += r.failures;
        worst = std::max(worst, r.worst_relative);
    }
    const double elapsed = seconds_since(start);
    v.require(failures == 0, "finite differences");
    v.require(elapsed < 60.0, "runtime < 60 s");
    v.detail << checked << " parameters over 3 fields, " << failures << " mismatches, worst relative error "
             << worst << ", " << fixed(elapsed, 1) << " s";
}

void ac2(Verdict& v) {
    const camera::CameraPose pose = camera::orbit_pose({0.0, 0.0, 3.0}, 30.0, {9, 9});
    renderer::QuadratureConfig q;
    q.samples = 256;
    q.jitter = false;
    double worst = 0.0;
    for (double sigma : {0.5, 2.0, 10.0}) {
        const Ball ball(1.0 + 1e-9, sigma);
        const double opacity = renderer::render(ball, pose, q).opacity.data[4 * 9 + 4];
        worst = std::max(worst, std::abs(opacity - (1.0 - std::exp(-2.0 * sigma))));
    }
    v.require(worst <= 1e-3, "opacity within 1e-3");
    v.detail << "max |opacity - (1 - exp(-sigma L))| = " << worst << " for sigma in {0.5, 2, 10}, N = 256";
}

void ac3(Verdict& v) {
    using namespace diffusion;
    const auto start = std::chrono::steady_clock::now();
    const DiffusionSchedule s = build_schedule(1000, 1e-4, 0.02);
    double product = 1.0, identity_err = 0.0;
    for (int t = 1; t <= s.steps; ++t) {
        const auto i = static_cast<std::size_t>(t);
        product *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
        identity_err = std::max(identity_err, std::abs(s.alpha_bar[i] - product));
        identity_err = std::max(identity_err, std::abs(s.alpha[i] - (1.0 - s.beta[i])));
        identity_err = std::max(identity_err, std::abs(s.alpha_bar[i] - s.alpha_bar[i - 1] * s.alpha[i]));
    }
    v.require(identity_err <= 1e-10, "schedule identities");

    const std::vector<double> half{0.5};
    const DiffusionSchedule h = schedule_from_betas(half);
    const double x0 = 1.3;
    std::mt19937_64 rng(17);
    const NoisedSample n = forward_sample(h, std::vector<double>(100000, x0), 1, rng);
    const double fmean = std::accumulate(n.z.begin(), n.z.end(), 0.0) / n.z.size();
    double fvar = 0.0;
    for (double z : n.z) fvar += (z - fmean) * (z - fmean);
    fvar /= n.z.size() - 1;
    v.require(std::abs(fmean - std::sqrt(0.5) * x0) <= 3.0 * std::sqrt(0.5 / n.z.size()), "forward mean");
    v.require(std::abs(fvar - 0.5) <= 0.01, "forward variance");

    const double mu0 = 2.0, s2 = 0.25;
    const Denoiser gaussian = [&s, mu0, s2](std::span<const double> z, int t) {
        const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
        std::vector<double> out(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            out[i] = (std::sqrt(ab) * s2 * z[i] + (1.0 - ab) * mu0) / (ab * s2 + 1.0 - ab);
        return out;
    };
    std::mt19937_64 rrng(5);
    const std::vector<double> x = reverse_sample(s, gaussian, 10000, rrng);
    const double rmean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    double rvar = 0.0;
    for (double xi : x) rvar += (xi - rmean) * (xi - rmean);
    rvar /= x.size() - 1;
    v.require(std::abs(rmean - mu0) <= 0.05, "reverse mean");
    v.require(std::abs(rvar - s2) <= 0.05 * s2, "reverse variance");
    const double elapsed = seconds_since(start);
    v.require(elapsed < 120.0, "runtime < 2 min");
    v.detail << "identity error " << identity_err << "; forward mean " << fixed(fmean, 4) << " var " << fixed(fvar, 4)
             << "; reverse mean " << fixed(rmean, 4) << " var " << fixed(rvar, 4) << "; " << fixed(elapsed, 1) << " s";
}

void ac4(Verdict& v) {
    using diffusion::cfg_combine;
    const std::vector<double> c{0.6, -0.25, 1.0}, u{0.5, 0.75, 0.0};
    v.require(cfg_combine(c, u, 1.0) == c, "gamma = 1 returns the conditional prediction");
    v.require(cfg_combine(c, u, 0.0) == u, "gamma = 0 returns the unconditional prediction");
    const double g50 = cfg_combine(std::vector<double>{0.6}, std::vector<double>{0.5}, 50.0)[0];
    const double g3 = cfg_combine(std::vector<double>{0.6}, std::vector<double>{0.5}, 3.0)[0];
    v.require(std::abs(g50 - 5.5) <= 1e-12, "gamma = 50");
    v.require(std::abs(g3 - 0.8) <= 1e-12, "gamma = 3");
    v.detail << "gamma 50 -> " << g50 << ", gamma 3 -> " << g3;
}

std::vector<double> params_of(const field::RadianceField& f) { return {f.params().begin(), f.params().end()}; }

void ac5(Verdict& v) {
    const config::RunConfig cfg = config::load(source_path("configs/smoke.ini"));
    for (const char* name : {"sphere", "two_box", "glass_shell"}) {
        const scores::SyntheticScene scene =
            scores::SyntheticScene::load(source_path(std::string("scenes/") + name + ".scene"));
        const scores::GroundTruth gt(scene);
        const auto poses = metrics::held_out_poses({cfg.eval.resolution, cfg.eval.resolution});
        field::FieldConfig fc = cfg.distill.field;
        fc.seed = cfg.distill.seed;
        const double before = metrics::mean_psnr(metrics::eval_psnr(field::RadianceField(fc), gt, poses));
        const auto start = std::chrono::steady_clock::now();
        const distill::RunResult result = cli::distill_scene(gt, cfg);
        const double elapsed = seconds_since(start);
        const double after = metrics::mean_psnr(metrics::eval_psnr(result.field, gt, poses));

        config::RunConfig shortcfg = cfg;
        shortcfg.distill.total_steps = 10;
        const bool deterministic =
            params_of(cli::distill_scene(gt, shortcfg).field) == params_of(cli::distill_scene(gt, shortcfg).field);

        v.require(after - before >= 10.0, std::string(name) + " gain >= 10 dB");
        v.require(elapsed < 300.0, std::string(name) + " runtime < 5 min");
        v.require(deterministic, std::string(name) + " repeat run identical");
        v.detail << name << " " << fixed(before, 2) << " -> " << fixed(after, 2) << " dB (+" << fixed(after - before, 2)
                 << ") in " << fixed(elapsed, 0) << " s" << (deterministic ? "" : " NONDETERMINISTIC") << "; ";
    }
}

void ac6(Verdict& v) {
    const scores::SyntheticScene scene = scores::SyntheticScene::load(source_path("scenes/two_box.scene"));
    const scores::GroundTruth gt(scene);
    const scores::GtMultiviewOracle text(gt);
    const scores::NovelViewOracle image(gt);
    const distill::ScoreProviders providers{&text, &image};
    distill::DistillationConfig base;
    base.total_steps = 1000;
    base.resolution_start = base.resolution_end = 16;
    base.batch_text_start = base.batch_text_end = 4;
    base.batch_image_start = base.batch_image_end = 2;
    base.field.grid_resolution = 12;
    field::RadianceField f(base.field);
    std::mt19937_64 lambdas(77);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::size_t mismatches = 0, compared = 0;
    for (int k = 0; k < 20; ++k) {
        const int step = 49 * k;
        distill::DistillationConfig ct = base, ci = base, cc = base;
        ct.lambda_image = 0.0;
        ci.lambda_text = 0.0;
        cc.lambda_text = u(lambdas);
        cc.lambda_image = u(lambdas);
        std::mt19937_64 r1(1000 + k), r2(1000 + k), r3(1000 + k);
        const distill::StepResult t = distill::combined_step(f, providers, ct, step, r1);
        const distill::StepResult i = distill::combined_step(f, providers, ci, step, r2);
        const distill::StepResult b = distill::combined_step(f, providers, cc, step, r3);
        for (std::size_t p = 0; p < b.combined.size(); ++p) {
            ++compared;
            if (b.combined.values[p] != cc.lambda_text * t.combined.values[p] + cc.lambda_image * i.combined.values[p])
                ++mismatches;
        }
        v.require(t.combined.norm() > 0.0 && i.combined.norm() > 0.0, "both paths active");
        f.mutable_params()[static_cast<std::size_t>(k)] += 0.01;
    }
    v.require(mismatches == 0, "bitwise equality");
    v.detail << "20 steps, " << compared << " gradient entries compared, " << mismatches << " mismatches";
}

void ac7(Verdict& v) {
    const config::RunConfig cfg = config::load(source_path("configs/ablation.ini"));
    const scores::SyntheticScene scene = scores::SyntheticScene::load(source_path("scenes/two_box.scene"));
    const scores::GroundTruth gt(scene);
    const auto start = std::chrono::steady_clock::now();
    cli::AblationTable table;
    for (scores::Pathology p : {scores::Pathology::attenuation, scores::Pathology::ghost_content,
                                scores::Pathology::hue_drift}) {
        const scores::PathologyConfig pc{p, cfg.ablation.amplitude(p)};
        int wins = 0;
        for (std::uint64_t seed : {0, 1, 2}) {
            for (double li : {0.0, 1.0}) table.cells.push_back(cli::run_ablation_cell(gt, cfg, pc, seed, li));
            wins += table.improved(pc, seed);
        }
        v.require(wins == 3, scores::to_string(p) + " 3/3 seeds");
        v.detail << scores::to_string(p) << " " << wins << "/3; ";
    }
    const double elapsed = seconds_since(start);
    v.require(elapsed < 1800.0, "runtime < 30 min");
    v.detail << fixed(elapsed / 60.0, 1) << " min\n" << table.to_markdown();
}

void ac8(Verdict& v) {
    mesh::ExtractionConfig ec;
    ec.resolution = 64;
    ec.threshold = 5.0;
    const mesh::TriangleMesh m = mesh::extract_mesh([](const Vec3& p) { return p.norm() <= 0.5 ? 10.0 : 0.0; }, ec);
    const double cell = 2.0 / (ec.resolution - 1);
    double worst_radius = 0.0;
    for (const Vec3& p : m.vertices) worst_radius = std::max(worst_radius, std::abs(p.norm() - 0.5));
    v.require(!m.empty() && worst_radius <= 2.0 * cell, "vertices within 2 cells");

    std::map<std::pair<int, int>, int> edges;
    for (const auto& t : m.triangles)
        for (int k = 0; k < 3; ++k) {
            const int a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
            ++edges[{std::min(a, b), std::max(a, b)}];
        }
    std::size_t open = 0;
    for (const auto& [e, n] : edges) open += n != 2;
    v.require(open == 0, "watertight");

    const mesh::TriangleMesh once = mesh::normalize_mesh(m);
    const mesh::TriangleMesh twice = mesh::normalize_mesh(once);
    double drift = 0.0;
    for (std::size_t i = 0; i < once.vertices.size(); ++i)
        drift = std::max(drift, (once.vertices[i] - twice.vertices[i]).cwiseAbs().maxCoeff());
    v.require(drift <= 1e-6, "normalize idempotent");

    const camera::CameraPose front = mesh::front_view_pose({64, 64});
    const double fov = rad_to_deg(2.0 * std::atan(1.0 / 3.0));
    v.require(std::abs(front.position.norm() - 2.2) <= 1e-12, "front distance 2.2");
    v.require(std::abs(front.fov_deg - fov) <= 1e-12, "front fov 2 atan(1/3)");
    v.detail << m.vertices.size() << " vertices, max |r - 0.5| = " << fixed(worst_radius, 4) << " (2 cells = "
             << fixed(2.0 * cell, 4) << "), " << open << " open edges, normalize drift " << drift << ", front view at "
             << front.position.norm() << " with fov " << fixed(front.fov_deg, 4);
}

void ac9(Verdict& v) {
    const distill::DistillationConfig c;
    const distill::ScheduleState s0 = distill::schedule_at(c, 0);
    const distill::ScheduleState s4 = distill::schedule_at(c, 4000);
    const distill::ScheduleState s9 = distill::schedule_at(c, 9000);
    v.require(s0 == distill::ScheduleState{0.02, 0.98, 64, 8, 12}, "step 0");
    v.require(std::abs(s4.t_max - 0.74) <= 1e-12 && s4.t_min == 0.02, "step 4000");
    v.require(s9 == distill::ScheduleState{0.02, 0.5, 256, 4, 4}, "step 9000");
    const auto show = [](const distill::ScheduleState& s) {
        std::ostringstream os;
        os << "(" << s.t_min << ", " << s.t_max << ", " << s.resolution << ", " << s.batch_text << ", "
           << s.batch_image << ")";
        return os.str();
    };
    v.detail << "0 -> " << show(s0) << ", 4000 -> " << show(s4) << ", 9000 -> " << show(s9);
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
        {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
        {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}};
    const std::vector<std::string> only(argv + 1, argv + argc);
    bool all_pass = true;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Verdict v;
        try {
            check(v);
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << "exception: " << e.what();
        }
        all_pass = all_pass && v.pass;
        std::cout << name << ' ' << (v.pass ? "PASS" : "FAIL") << ": " << v.detail.str() << std::endl;
    }
    return all_pass ? 0 : 1;
}
