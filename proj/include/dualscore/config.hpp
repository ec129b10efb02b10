#pragma once

#include "dualscore/distill.hpp"
#include "dualscore/kvdoc.hpp"
#include "dualscore/scores.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dualscore::config {

struct OutputConfig {
    int snapshot_every = 500;
    int checkpoint_every = 500;
    int snapshot_resolution = 128;
};

struct EvalConfig {
    int resolution = 64;       // held-out renders
    int iou_resolution = 64;
    double iou_threshold = 2.5;
};

struct MeshConfig {
    int resolution = 64;
    double threshold = 2.5;
    long face_cap = 40000;
    int image_resolution = 256;
};

/// Optional corruption of the text-path oracle for a single run.
struct PathologySetting {
    bool enabled = false;
    scores::PathologyConfig config;
};

struct AblationConfig {
    std::vector<scores::Pathology> pathologies{scores::Pathology::attenuation, scores::Pathology::ghost_content,
                                               scores::Pathology::hue_drift};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    double attenuation_amplitude = 1.0;
    double ghost_content_amplitude = 0.5;
    double hue_drift_amplitude = 0.5;
    int jobs = 1;

    [[nodiscard]] double amplitude(scores::Pathology p) const;
};

struct RunConfig {
    distill::DistillationConfig distill;
    PathologySetting pathology;
    OutputConfig output;
    EvalConfig eval;
    MeshConfig mesh;
    AblationConfig ablation;

    /// Throws ConfigError on any out-of-range value.
    void validate() const;
};

/// One "section.key=value" command-line override.
struct Override {
    std::string section;
    std::string key;
    std::string value;
};

[[nodiscard]] Override parse_override(const std::string& text);

/// Applies every entry of `doc` on top of `config`. Unknown sections and keys
/// are errors anchored at their source line.
void apply(const kvdoc::Document& doc, RunConfig& config);

/// Defaults, then the file (when given), then the overrides in order.
[[nodiscard]] RunConfig load(const std::optional<std::filesystem::path>& path,
                             const std::vector<Override>& overrides = {});
[[nodiscard]] RunConfig parse(const std::string& text, const std::string& source = "<string>");

/// Every field of the resolved configuration in the same format `parse` reads.
[[nodiscard]] std::string to_ini(const RunConfig& config);

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] std::string format_double(double v);

}  // namespace dualscore::config
