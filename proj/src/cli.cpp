#include "dualscore/cli.hpp"

#include "dualscore/renderer.hpp"

#include "json.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace dualscore::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw Error("cannot write " + tmp.string());
        os << text;
        if (!os) throw Error("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

json psnr_json(const metrics::PsnrResult& r) {
    return {{"db", r.infinite ? json(nullptr) : json(r.db)}, {"mse", r.mse}, {"infinite", r.infinite}};
}

json step_json(const distill::StepReport& r) {
    return {{"step", r.step},
            {"sds_text_residual_norm", r.sds_text_residual_norm},
            {"sds_image_residual_norm", r.sds_image_residual_norm},
            {"grad_norm", r.grad_norm},
            {"clipped", r.clipped}};
}

std::string step_name(int step, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%06d%s", step, ext);
    return buf;
}

scores::SyntheticScene load_scene(const fs::path& path) { return scores::SyntheticScene::load(path); }

field::RadianceField load_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    try {
        return field::RadianceField::load(path);
    } catch (const Error& e) {
        throw ConfigError("invalid checkpoint " + path.string() + ": " + e.what());
    }
}

Image snapshot_tile(const field::RadianceField& field, const config::RunConfig& cfg) {
    const int r = cfg.output.snapshot_resolution;
    renderer::QuadratureConfig q;
    q.samples = cfg.distill.samples_per_ray;
    q.jitter = false;
    const renderer::FieldMedium medium(field);
    std::vector<Image> views;
    for (const auto& pose : metrics::held_out_poses({r, r})) views.push_back(renderer::render(medium, pose, q).rgb);
    return tile_images(views, static_cast<int>(views.size()));
}

std::string fmt(double v, int precision = 4) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

std::string row_name(const std::optional<scores::PathologyConfig>& p) {
    return p ? scores::to_string(p->kind) : std::string("clean");
}

bool same_row(const std::optional<scores::PathologyConfig>& a, const std::optional<scores::PathologyConfig>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || (a->kind == b->kind && a->amplitude == b->amplitude);
}

}  // namespace

fs::path resolve_output(const fs::path& path) {
    if (path.is_absolute()) return path;
    const char* root = std::getenv(kOutputRootEnv);
    if (root && *root) return fs::path(root) / path;
    return path;
}

std::string RunManifest::to_json() const {
    json j;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    j["seed"] = seed;
    j["scene"] = scene.string();
    j["output_dir"] = output_dir.string();
    j["config_echo"] = config_echo.string();
    j["steps_csv"] = steps_csv.string();
    j["metrics"] = metrics.string();
    j["final_checkpoint"] = final_checkpoint.string();
    j["checkpoints"] = json::array();
    for (const auto& p : checkpoints) j["checkpoints"].push_back(p.string());
    j["snapshots"] = json::array();
    for (const auto& p : snapshots) j["snapshots"].push_back(p.string());
    return j.dump(2) + "\n";
}

std::string MetricsReport::to_json() const {
    json j;
    j["psnr_initial"] = json::array();
    for (const auto& r : psnr_initial) j["psnr_initial"].push_back(psnr_json(r));
    j["psnr"] = json::array();
    for (const auto& r : psnr) j["psnr"].push_back(psnr_json(r));
    const double mean = mean_psnr();
    j["mean_psnr"] = std::isinf(mean) ? json(nullptr) : json(mean);
    if (!psnr_initial.empty()) {
        const double init = metrics::mean_psnr(psnr_initial);
        j["mean_psnr_initial"] = std::isinf(init) ? json(nullptr) : json(init);
    }
    j["density_iou"] = iou;
    j["cross_view_inconsistency"] = consistency.score;
    j["consistency_pairs_used"] = consistency.pairs_used;
    j["consistency_pairs_skipped"] = consistency.pairs_skipped;
    j["steps"] = json::array();
    for (const auto& s : steps) j["steps"].push_back(step_json(s));
    return j.dump(2) + "\n";
}

MetricsReport evaluate(const field::RadianceField& field, const scores::GroundTruth& gt,
                       const config::RunConfig& config) {
    MetricsReport report;
    const camera::Resolution res{config.eval.resolution, config.eval.resolution};
    report.psnr = metrics::eval_psnr(field, gt, metrics::held_out_poses(res));
    report.iou = metrics::eval_density_iou(field, gt.scene(), config.eval.iou_resolution, config.eval.iou_threshold);
    report.consistency = metrics::eval_cross_view_consistency(field, gt, metrics::consistency_pairs(res));
    return report;
}

distill::RunResult distill_scene(const scores::GroundTruth& gt, const config::RunConfig& config,
                                 const distill::RunSinks& sinks) {
    const scores::GtMultiviewOracle clean(gt);
    const scores::PerturbedMultiviewOracle perturbed(gt, config.pathology.config);
    const scores::NovelViewOracle image(gt);
    const distill::ScoreProviders providers{
        config.pathology.enabled ? static_cast<const scores::MultiviewScoreProvider*>(&perturbed) : &clean, &image};
    return distill::run(providers, config.distill, sinks);
}

RunManifest cmd_distill(const DistillOptions& options, std::ostream& log) {
    const config::RunConfig cfg = config::load(options.config, options.overrides);
    const scores::SyntheticScene scene = load_scene(options.scene);

    RunManifest manifest;
    manifest.seed = cfg.distill.seed;
    manifest.scene = options.scene;
    fs::path out = options.output_dir;
    if (out.empty()) out = fs::path("runs") / (scene.name() + "-seed" + std::to_string(cfg.distill.seed));
    out = resolve_output(out);
    manifest.output_dir = out;
    try {
        fs::create_directories(out / "checkpoints");
        fs::create_directories(out / "snapshots");
    } catch (const fs::filesystem_error& e) {
        throw ConfigError("cannot create output directory " + out.string() + ": " + e.what());
    }
    manifest.config_echo = out / "config.resolved.ini";
    manifest.steps_csv = out / "steps.csv";
    manifest.metrics = out / "metrics.json";
    const fs::path manifest_path = out / "manifest.json";

    write_text_atomic(manifest.config_echo,
                      "# scene: " + options.scene.string() + "\n" + config::to_ini(cfg));
    manifest.status = "running";
    write_text_atomic(manifest_path, manifest.to_json());

    const scores::GroundTruth gt(scene);
    field::FieldConfig fc = cfg.distill.field;
    fc.seed = cfg.distill.seed;
    const camera::Resolution eval_res{cfg.eval.resolution, cfg.eval.resolution};
    const std::vector<metrics::PsnrResult> initial =
        metrics::eval_psnr(field::RadianceField(fc), gt, metrics::held_out_poses(eval_res));
    log << "distill: scene '" << scene.name() << "', " << cfg.distill.total_steps << " steps, seed " << cfg.distill.seed
        << ", initial held-out PSNR " << fmt(metrics::mean_psnr(initial), 2) << " dB\n";

    std::ofstream csv(manifest.steps_csv);
    if (!csv) throw Error("cannot write " + manifest.steps_csv.string());
    csv << "step,t_min,t_max,resolution,batch_text,batch_image,t_text,sds_text_residual_norm,"
           "sds_image_residual_norm,sds_text_guided_norm,sds_image_guided_norm,grad_norm,clipped\n";
    csv << std::setprecision(17);

    distill::RunSinks sinks;
    int clipped = 0;
    sinks.on_step = [&](const distill::StepReport& r) {
        csv << r.step << ',' << r.schedule.t_min << ',' << r.schedule.t_max << ',' << r.schedule.resolution << ','
            << r.schedule.batch_text << ',' << r.schedule.batch_image << ',' << r.t_text << ','
            << r.sds_text_residual_norm << ',' << r.sds_image_residual_norm << ',' << r.sds_text_guided_norm << ','
            << r.sds_image_guided_norm << ',' << r.grad_norm << ',' << (r.clipped ? 1 : 0) << '\n';
        clipped += r.clipped;
    };
    sinks.snapshot_every = cfg.output.snapshot_every;
    sinks.on_snapshot = [&](int step, const field::RadianceField& f) {
        const fs::path p = out / "snapshots" / step_name(step, ".png");
        renderer::write_png(p, snapshot_tile(f, cfg));
        manifest.snapshots.push_back(p);
        log << "  step " << step << ": snapshot " << p.string() << "\n";
    };
    sinks.checkpoint_every = cfg.output.checkpoint_every;
    sinks.on_checkpoint = [&](int step, const field::RadianceField& f) {
        const fs::path p = out / "checkpoints" / step_name(step, ".dsrf");
        f.save(p);
        manifest.checkpoints.push_back(p);
        write_text_atomic(manifest_path, manifest.to_json());
    };

    std::optional<distill::RunResult> result;
    try {
        result = distill_scene(gt, cfg, sinks);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        manifest.status = "failed";
        manifest.error = e.what();
        csv.flush();
        write_text_atomic(manifest_path, manifest.to_json());
        throw RunAborted(std::string("run aborted: ") + e.what());
    }
    csv.flush();

    manifest.final_checkpoint = out / "checkpoints" / "final.dsrf";
    result->field.save(manifest.final_checkpoint);

    MetricsReport report = evaluate(result->field, gt, cfg);
    report.psnr_initial = initial;
    report.steps = std::move(result->reports);
    write_text_atomic(manifest.metrics, report.to_json());

    manifest.status = "completed";
    write_text_atomic(manifest_path, manifest.to_json());
    log << "distill: done. held-out PSNR " << fmt(report.mean_psnr(), 2) << " dB, density IoU " << fmt(report.iou)
        << ", cross-view inconsistency " << fmt(report.consistency.score) << ", clipped steps " << clipped << "\n"
        << "manifest: " << manifest_path.string() << "\n";
    return manifest;
}

MeshSummary cmd_mesh(const MeshOptions& options, std::ostream& log) {
    const field::RadianceField field = load_checkpoint(options.checkpoint);
    mesh::ExtractionConfig ec;
    ec.resolution = options.mesh.resolution;
    ec.threshold = options.mesh.threshold;
    const mesh::TriangleMesh raw = mesh::extract_mesh(field, ec);
    if (raw.empty()) {
        log << "warning: no density crosses threshold " << ec.threshold << "; no mesh written\n";
        throw EmptyMesh("empty mesh at threshold " + config::format_double(ec.threshold));
    }
    const mesh::TriangleMesh normalized = mesh::normalize_mesh(raw);
    const fs::path obj = resolve_output(options.output);
    if (obj.has_parent_path()) fs::create_directories(obj.parent_path());
    try {
        mesh::write_obj(obj, normalized, options.mesh.face_cap);
    } catch (const mesh::FaceCapExceeded& e) {
        log << "warning: " << e.what() << "\n";
        throw;
    }
    fs::path png = obj;
    png.replace_extension(".png");
    const int r = options.mesh.image_resolution;
    renderer::write_png(png, mesh::capture_front_view(normalized, {r, r}));
    log << "mesh: " << normalized.vertices.size() << " vertices, " << normalized.triangles.size() << " faces -> "
        << obj.string() << "\nfront view: " << png.string() << "\n";
    return {normalized.vertices.size(), normalized.triangles.size(), obj, png};
}

MetricsReport cmd_eval(const EvalOptions& options, std::ostream& log) {
    const config::RunConfig cfg = config::load(options.config, options.overrides);
    const scores::SyntheticScene scene = load_scene(options.scene);
    const field::RadianceField field = load_checkpoint(options.checkpoint);
    const scores::GroundTruth gt(scene);
    const MetricsReport report = evaluate(field, gt, cfg);
    if (options.output) {
        const fs::path p = resolve_output(*options.output);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        write_text_atomic(p, report.to_json());
        log << "metrics: " << p.string() << "\n";
    }
    log << "held-out PSNR (dB):";
    for (const auto& r : report.psnr) log << ' ' << (r.infinite ? std::string("inf") : fmt(r.db, 2));
    log << "\nmean PSNR " << fmt(report.mean_psnr(), 2) << " dB, density IoU " << fmt(report.iou)
        << ", cross-view inconsistency " << fmt(report.consistency.score) << "\n";
    return report;
}

std::string AblationTable::target_metric(const std::optional<scores::PathologyConfig>& pathology) {
    if (pathology && pathology->kind == scores::Pathology::hue_drift) return "consistency";
    return "iou";
}

bool AblationTable::improved(const std::optional<scores::PathologyConfig>& pathology, std::uint64_t seed) const {
    const AblationCell* off = nullptr;
    const AblationCell* on = nullptr;
    for (const AblationCell& c : cells) {
        if (!same_row(c.pathology, pathology) || c.seed != seed) continue;
        (c.lambda_image == 0.0 ? off : on) = &c;
    }
    if (!off || !on) throw Error("ablation: missing cell for row " + row_name(pathology));
    if (target_metric(pathology) == "consistency") return on->consistency < off->consistency;
    return on->iou > off->iou;
}

std::string AblationTable::to_markdown() const {
    std::ostringstream os;
    os << "| oracle | amplitude | seed | lambda_image | PSNR (dB) | density IoU | cross-view MAE | target | "
          "lambda_image=1 better |\n";
    os << "|---|---|---|---|---|---|---|---|---|\n";
    for (const AblationCell& c : cells) {
        os << "| " << row_name(c.pathology) << " | " << (c.pathology ? fmt(c.pathology->amplitude, 2) : "-") << " | "
           << c.seed << " | " << fmt(c.lambda_image, 0) << " | " << fmt(c.psnr, 2) << " | " << fmt(c.iou) << " | "
           << fmt(c.consistency) << " | " << target_metric(c.pathology) << " | ";
        if (c.lambda_image != 0.0) os << (improved(c.pathology, c.seed) ? "yes" : "no");
        os << " |\n";
    }
    return os.str();
}

std::string AblationTable::to_json() const {
    json j = json::array();
    for (const AblationCell& c : cells) {
        json cell = {{"oracle", row_name(c.pathology)},
                     {"amplitude", c.pathology ? json(c.pathology->amplitude) : json(nullptr)},
                     {"seed", c.seed},
                     {"lambda_image", c.lambda_image},
                     {"psnr", std::isinf(c.psnr) ? json(nullptr) : json(c.psnr)},
                     {"density_iou", c.iou},
                     {"cross_view_inconsistency", c.consistency},
                     {"target_metric", target_metric(c.pathology)}};
        if (c.lambda_image != 0.0) cell["improved"] = improved(c.pathology, c.seed);
        j.push_back(cell);
    }
    return j.dump(2) + "\n";
}

AblationCell run_ablation_cell(const scores::GroundTruth& gt, const config::RunConfig& config,
                               const std::optional<scores::PathologyConfig>& pathology, std::uint64_t seed,
                               double lambda_image) {
    config::RunConfig cfg = config;
    cfg.distill.seed = seed;
    cfg.distill.lambda_image = lambda_image;
    cfg.pathology.enabled = pathology.has_value();
    if (pathology) cfg.pathology.config = *pathology;
    const distill::RunResult result = distill_scene(gt, cfg);
    const MetricsReport report = evaluate(result.field, gt, cfg);

    AblationCell cell;
    cell.pathology = pathology;
    cell.seed = seed;
    cell.lambda_image = lambda_image;
    cell.psnr = report.mean_psnr();
    cell.iou = report.iou;
    cell.consistency = report.consistency.score;
    const camera::Resolution res{cfg.eval.resolution, cfg.eval.resolution};
    const auto poses = metrics::held_out_poses(res);
    const renderer::FieldMedium medium(result.field);
    for (std::size_t k : {std::size_t{0}, std::size_t{2}})
        cell.views.push_back(renderer::render(medium, poses[k], renderer::QuadratureConfig::evaluation()).rgb);
    return cell;
}

AblationTable cmd_ablation(const AblationOptions& options, std::ostream& log) {
    const config::RunConfig cfg = config::load(options.config, options.overrides);
    const scores::SyntheticScene scene = load_scene(options.scene);
    fs::path out = options.output_dir.empty() ? fs::path("runs") / (scene.name() + "-ablation") : options.output_dir;
    out = resolve_output(out);
    fs::create_directories(out);
    write_text_atomic(out / "config.resolved.ini", "# scene: " + options.scene.string() + "\n" + config::to_ini(cfg));

    std::vector<std::optional<scores::PathologyConfig>> rows{std::nullopt};
    for (scores::Pathology p : cfg.ablation.pathologies) rows.push_back(scores::PathologyConfig{p, cfg.ablation.amplitude(p)});

    struct Job {
        std::optional<scores::PathologyConfig> pathology;
        std::uint64_t seed;
        double lambda_image;
    };
    std::vector<Job> jobs;
    for (const auto& row : rows)
        for (std::uint64_t seed : cfg.ablation.seeds)
            for (double li : {0.0, 1.0}) jobs.push_back({row, seed, li});

    const scores::GroundTruth gt(scene);
    AblationTable table;
    table.cells.resize(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                table.cells[i] = run_ablation_cell(gt, cfg, jobs[i].pathology, jobs[i].seed, jobs[i].lambda_image);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    log << "ablation: " << jobs.size() << " runs of " << cfg.distill.total_steps << " steps with " << cfg.ablation.jobs
        << " worker(s)\n";
    if (cfg.ablation.jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < cfg.ablation.jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    write_text_atomic(out / "ablation.md", table.to_markdown());
    write_text_atomic(out / "ablation.json", table.to_json());
    // Grid: one row per oracle (first seed), columns lambda_image = 0 then 1.
    std::vector<Image> grid;
    for (const auto& row : rows)
        for (double li : {0.0, 1.0})
            for (const AblationCell& c : table.cells)
                if (same_row(c.pathology, row) && c.seed == cfg.ablation.seeds.front() && c.lambda_image == li)
                    grid.insert(grid.end(), c.views.begin(), c.views.end());
    renderer::write_png(out / "ablation_grid.png", tile_images(grid, 4));
    log << table.to_markdown() << "results: " << (out / "ablation.md").string() << "\n";
    return table;
}

void cmd_render_snapshot(const SnapshotOptions& options, std::ostream& log) {
    if (options.checkpoint.has_value() == options.scene.has_value())
        throw ConfigError("render-snapshot: give exactly one of a checkpoint or a scene");
    if (options.resolution < 1) throw ConfigError("render-snapshot: resolution must be >= 1");
    const camera::Resolution res{options.resolution, options.resolution};
    camera::CameraPose pose;
    if (options.front_view) {
        pose = mesh::front_view_pose(res);
    } else {
        if (!(options.fov_deg > 0.0 && options.fov_deg < 180.0)) throw ConfigError("render-snapshot: fov must lie in (0, 180)");
        if (!(options.distance_scale > 0.0)) throw ConfigError("render-snapshot: distance scale must be > 0");
        const double d = camera::camera_distance(options.fov_deg, 0.5, options.distance_scale);
        pose = camera::orbit_pose({options.azimuth_deg, options.elevation_deg, d}, options.fov_deg, res);
    }
    renderer::QuadratureConfig q = renderer::QuadratureConfig::evaluation();
    if (options.front_view) q.bound_radius = std::sqrt(3.0);
    Image image;
    if (options.checkpoint) {
        const field::RadianceField field = load_checkpoint(*options.checkpoint);
        image = renderer::render(renderer::FieldMedium(field), pose, q).rgb;
    } else {
        const scores::SyntheticScene scene = load_scene(*options.scene);
        image = renderer::render(scene, pose, q).rgb;
    }
    const fs::path out = resolve_output(options.output);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    renderer::write_png(out, image);
    log << "snapshot: " << out.string() << "\n";
}

Image tile_images(const std::vector<Image>& images, int columns) {
    if (images.empty()) return {};
    if (columns < 1) throw Error("tile_images: need at least one column");
    const int w = images.front().width, h = images.front().height, ch = images.front().channels;
    for (const Image& im : images)
        if (im.width != w || im.height != h || im.channels != ch) throw Error("tile_images: images differ in shape");
    const int cols = std::min<int>(columns, static_cast<int>(images.size()));
    const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
    Image out(w * cols, h * rows, ch, 1.0);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const int ox = static_cast<int>(i) % cols * w, oy = static_cast<int>(i) / cols * h;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < ch; ++c) out.at(ox + x, oy + y, c) = images[i].at(x, y, c);
    }
    return out;
}

}  // namespace dualscore::cli
