#include "dualscore/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace dualscore;

namespace {

std::vector<config::Override> collect_overrides(const std::vector<std::string>& sets, const CLI::Option* seed,
                                                std::uint64_t seed_value, const CLI::Option* steps, int steps_value,
                                                const CLI::Option* lambda_i, double lambda_i_value,
                                                const CLI::Option* lambda_t, double lambda_t_value) {
    std::vector<config::Override> out;
    for (const std::string& s : sets) out.push_back(config::parse_override(s));
    if (seed && seed->count()) out.push_back({"run", "seed", std::to_string(seed_value)});
    if (steps && steps->count()) out.push_back({"run", "total_steps", std::to_string(steps_value)});
    if (lambda_i && lambda_i->count()) out.push_back({"run", "lambda_image", config::format_double(lambda_i_value)});
    if (lambda_t && lambda_t->count()) out.push_back({"run", "lambda_text", config::format_double(lambda_t_value)});
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-score distillation of radiance fields from oracle diffusion scores"};
    app.require_subcommand(1);
    app.footer(std::string("Exit codes: 0 ok, 2 configuration or input error, 3 run aborted, 4 empty mesh, "
                           "5 face cap exceeded.\nRelative output paths are placed under $") +
               cli::kOutputRootEnv + " when it is set.");

    // distill
    cli::DistillOptions distill_opts;
    std::string distill_config;
    std::vector<std::string> distill_sets;
    std::uint64_t seed = 0;
    int steps = 0;
    double lambda_i = 1.0, lambda_t = 1.0;
    auto* distill = app.add_subcommand("distill", "Optimize a radiance field against a scene's oracles");
    distill->add_option("--config", distill_config, "Run configuration file")->check(CLI::ExistingFile);
    distill->add_option("--scene", distill_opts.scene, "Scene file")->required();
    distill->add_option("--out", distill_opts.output_dir, "Output directory (default runs/<scene>-seed<seed>)");
    distill->add_option("--set", distill_sets, "Override a config value, section.key=value");
    auto* d_seed = distill->add_option("--seed", seed, "Random seed");
    auto* d_steps = distill->add_option("--steps", steps, "Total optimization steps");
    auto* d_li = distill->add_option("--lambda-i", lambda_i, "Weight of the image-conditioned path");
    auto* d_lt = distill->add_option("--lambda-t", lambda_t, "Weight of the text-conditioned path");

    // mesh
    cli::MeshOptions mesh_opts;
    auto* mesh_cmd = app.add_subcommand("mesh", "Extract, normalize and export a mesh from a checkpoint");
    mesh_cmd->add_option("--checkpoint", mesh_opts.checkpoint, "Field checkpoint")->required();
    mesh_cmd->add_option("--out", mesh_opts.output, "Output OBJ path")->required();
    mesh_cmd->add_option("--threshold", mesh_opts.mesh.threshold, "Density iso-level")->capture_default_str();
    mesh_cmd->add_option("--resolution", mesh_opts.mesh.resolution, "Lattice points per axis")->capture_default_str();
    mesh_cmd->add_option("--face-cap", mesh_opts.mesh.face_cap, "Refuse meshes with more faces (0 disables)")
        ->capture_default_str();
    mesh_cmd->add_option("--image-resolution", mesh_opts.mesh.image_resolution, "Front-view image size")
        ->capture_default_str();

    // eval
    cli::EvalOptions eval_opts;
    std::string eval_config;
    std::vector<std::string> eval_sets;
    std::string eval_out;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint against a scene");
    eval->add_option("--config", eval_config, "Run configuration file")->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", eval_opts.checkpoint, "Field checkpoint")->required();
    eval->add_option("--scene", eval_opts.scene, "Scene file")->required();
    eval->add_option("--set", eval_sets, "Override a config value, section.key=value");
    eval->add_option("--out", eval_out, "Write metrics JSON here");

    // ablation
    cli::AblationOptions ablation_opts;
    std::string ablation_config;
    std::vector<std::string> ablation_sets;
    auto* ablation = app.add_subcommand("ablation", "Compare lambda_image = 0 and 1 under corrupted text oracles");
    ablation->add_option("--config", ablation_config, "Run configuration file")->check(CLI::ExistingFile);
    ablation->add_option("--scene", ablation_opts.scene, "Scene file")->required();
    ablation->add_option("--out", ablation_opts.output_dir, "Output directory (default runs/<scene>-ablation)");
    ablation->add_option("--set", ablation_sets, "Override a config value, section.key=value");

    // render-snapshot
    cli::SnapshotOptions snap_opts;
    std::string snap_checkpoint, snap_scene;
    auto* snap = app.add_subcommand("render-snapshot", "Render a checkpoint or a scene to PNG");
    snap->add_option("--checkpoint", snap_checkpoint, "Field checkpoint");
    snap->add_option("--scene", snap_scene, "Scene file (renders the ground truth)");
    snap->add_option("--azimuth", snap_opts.azimuth_deg, "Degrees, 0 = front (-Y)")->capture_default_str();
    snap->add_option("--elevation", snap_opts.elevation_deg, "Degrees above the XY plane")->capture_default_str();
    snap->add_option("--fov", snap_opts.fov_deg, "Vertical field of view in degrees")->capture_default_str();
    snap->add_option("--distance-scale", snap_opts.distance_scale, "Multiplier on the fov-derived distance")
        ->capture_default_str();
    snap->add_option("--resolution", snap_opts.resolution, "Image width and height")->capture_default_str();
    snap->add_flag("--front-view", snap_opts.front_view, "Use the fixed mesh-capture camera");
    snap->add_option("--out", snap_opts.output, "Output PNG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kExitOk : cli::kExitConfig;
    }

    try {
        if (*distill) {
            if (!distill_config.empty()) distill_opts.config = distill_config;
            distill_opts.overrides =
                collect_overrides(distill_sets, d_seed, seed, d_steps, steps, d_li, lambda_i, d_lt, lambda_t);
            cli::cmd_distill(distill_opts, std::cout);
        } else if (*mesh_cmd) {
            (void)cli::cmd_mesh(mesh_opts, std::cout);
        } else if (*eval) {
            if (!eval_config.empty()) eval_opts.config = eval_config;
            for (const std::string& s : eval_sets) eval_opts.overrides.push_back(config::parse_override(s));
            if (!eval_out.empty()) eval_opts.output = eval_out;
            (void)cli::cmd_eval(eval_opts, std::cout);
        } else if (*ablation) {
            if (!ablation_config.empty()) ablation_opts.config = ablation_config;
            for (const std::string& s : ablation_sets) ablation_opts.overrides.push_back(config::parse_override(s));
            (void)cli::cmd_ablation(ablation_opts, std::cout);
        } else if (*snap) {
            if (!snap_checkpoint.empty()) snap_opts.checkpoint = snap_checkpoint;
            if (!snap_scene.empty()) snap_opts.scene = snap_scene;
            cli::cmd_render_snapshot(snap_opts, std::cout);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitConfig;
    } catch (const cli::EmptyMesh& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitEmptyMesh;
    } catch (const mesh::FaceCapExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitFaceCap;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitRuntime;
    }
    return cli::kExitOk;
}
