#pragma once

#include "dualscore/config.hpp"
#include "dualscore/distill.hpp"
#include "dualscore/mesh.hpp"
#include "dualscore/metrics.hpp"
#include "dualscore/scores.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dualscore::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,      // unreadable or invalid configuration / input files
    kExitRuntime = 3,     // run aborted (non-finite values, I/O failures)
    kExitEmptyMesh = 4,   // no surface crossed the threshold
    kExitFaceCap = 5,     // mesh above the face cap, not written
};

class EmptyMesh : public Error {
public:
    using Error::Error;
};

class RunAborted : public Error {
public:
    using Error::Error;
};

inline constexpr const char* kOutputRootEnv = "DUALSCORE_OUTPUT_ROOT";

/// Relative paths are placed under $DUALSCORE_OUTPUT_ROOT when it is set.
[[nodiscard]] std::filesystem::path resolve_output(const std::filesystem::path& path);

struct RunManifest {
    std::string status;  // "running", "completed" or "failed"
    std::string error;
    std::uint64_t seed = 0;
    std::filesystem::path scene;
    std::filesystem::path output_dir;
    std::filesystem::path config_echo;
    std::filesystem::path steps_csv;
    std::filesystem::path metrics;
    std::filesystem::path final_checkpoint;
    std::vector<std::filesystem::path> checkpoints;
    std::vector<std::filesystem::path> snapshots;

    [[nodiscard]] std::string to_json() const;
};

struct MetricsReport {
    std::vector<metrics::PsnrResult> psnr_initial;
    std::vector<metrics::PsnrResult> psnr;
    double iou = 0.0;
    metrics::ConsistencyResult consistency;
    std::vector<distill::StepReport> steps;

    [[nodiscard]] double mean_psnr() const { return metrics::mean_psnr(psnr); }
    [[nodiscard]] std::string to_json() const;
};

/// Held-out PSNR, density IoU and cross-view consistency of a field.
[[nodiscard]] MetricsReport evaluate(const field::RadianceField& field, const scores::GroundTruth& gt,
                                     const config::RunConfig& config);

/// Runs one distillation with GT oracles, optionally corrupting the text path.
[[nodiscard]] distill::RunResult distill_scene(const scores::GroundTruth& gt, const config::RunConfig& config,
                                               const distill::RunSinks& sinks = {});

struct DistillOptions {
    std::optional<std::filesystem::path> config;
    std::filesystem::path scene;
    std::filesystem::path output_dir;
    std::vector<config::Override> overrides;
};

/// Writes config.resolved.ini, manifest.json, steps.csv, metrics.json,
/// checkpoints/ and snapshots/ under the output directory.
RunManifest cmd_distill(const DistillOptions& options, std::ostream& log);

struct MeshOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path output;  // .obj; the front view goes next to it as .png
    config::MeshConfig mesh;
};

struct MeshSummary {
    std::size_t vertices = 0;
    std::size_t faces = 0;
    std::filesystem::path obj;
    std::filesystem::path front_view;
};

MeshSummary cmd_mesh(const MeshOptions& options, std::ostream& log);

struct EvalOptions {
    std::optional<std::filesystem::path> config;
    std::filesystem::path checkpoint;
    std::filesystem::path scene;
    std::vector<config::Override> overrides;
    std::optional<std::filesystem::path> output;  // metrics JSON
};

MetricsReport cmd_eval(const EvalOptions& options, std::ostream& log);

struct AblationOptions {
    std::optional<std::filesystem::path> config;
    std::filesystem::path scene;
    std::filesystem::path output_dir;
    std::vector<config::Override> overrides;
};

struct AblationCell {
    std::optional<scores::PathologyConfig> pathology;  // empty for the clean-oracle row
    std::uint64_t seed = 0;
    double lambda_image = 0.0;
    double psnr = 0.0;
    double iou = 0.0;
    double consistency = 0.0;
    std::vector<Image> views;  // renders at the first and third held-out poses
};

struct AblationTable {
    std::vector<AblationCell> cells;

    /// "iou" for the density pathologies, "consistency" for hue drift.
    [[nodiscard]] static std::string target_metric(const std::optional<scores::PathologyConfig>& pathology);
    /// Whether lambda_image = 1 beats lambda_image = 0 on the target metric
    /// for the given row and seed.
    [[nodiscard]] bool improved(const std::optional<scores::PathologyConfig>& pathology, std::uint64_t seed) const;
    [[nodiscard]] std::string to_markdown() const;
    [[nodiscard]] std::string to_json() const;
};

/// One ablation cell: a run with the given pathology, seed and lambda_image.
[[nodiscard]] AblationCell run_ablation_cell(const scores::GroundTruth& gt, const config::RunConfig& config,
                                             const std::optional<scores::PathologyConfig>& pathology,
                                             std::uint64_t seed, double lambda_image);

AblationTable cmd_ablation(const AblationOptions& options, std::ostream& log);

struct SnapshotOptions {
    std::optional<std::filesystem::path> checkpoint;  // render the field ...
    std::optional<std::filesystem::path> scene;       // ... or the ground truth
    double azimuth_deg = 0.0;
    double elevation_deg = 15.0;
    double fov_deg = 40.0;
    double distance_scale = 0.9;
    int resolution = 128;
    bool front_view = false;  // use the fixed mesh-capture camera instead
    std::filesystem::path output;
};

void cmd_render_snapshot(const SnapshotOptions& options, std::ostream& log);

/// Stitches equally sized RGB images into a grid, row-major.
[[nodiscard]] Image tile_images(const std::vector<Image>& images, int columns);

}  // namespace dualscore::cli
