#pragma once

#include "dualscore/camera.hpp"
#include "dualscore/common.hpp"
#include "dualscore/renderer.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

namespace dualscore::scores {

enum class Shape { sphere, box };

struct Primitive {
    Shape shape = Shape::sphere;
    Vec3 center = Vec3::Zero();
    double radius = 0.5;              // sphere
    double inner_radius = 0.0;        // sphere: > 0 makes a hollow shell
    Vec3 half_extents = Vec3::Zero(); // box
    Vec3 color = Vec3::Ones();
    double density = 1.0;

    [[nodiscard]] bool contains(const Vec3& p) const;
};

/// Ground-truth volumetric scene built from constant-density primitives.
/// Overlapping primitives add densities and mix colors by density.
class SyntheticScene final : public renderer::Medium {
public:
    SyntheticScene() = default;
    explicit SyntheticScene(std::vector<Primitive> primitives, std::string name = {});

    [[nodiscard]] const std::vector<Primitive>& primitives() const { return primitives_; }
    [[nodiscard]] const std::string& name() const { return name_; }

    /// Throws ConfigError on non-positive densities, colors outside [0, 1]
    /// or primitives leaving [-1, 1]^3.
    void validate() const;

    [[nodiscard]] double density(const Vec3& p) const;
    [[nodiscard]] bool occupied(const Vec3& p) const { return density(p) > 0.0; }

    void evaluate(std::span<const Vec3> points, std::span<const Vec3> directions, std::span<double> density,
                  std::span<Vec3> color) const override;

    static SyntheticScene parse(const std::string& text, const std::string& source = "<string>");
    static SyntheticScene load(const std::filesystem::path& path);

private:
    std::vector<Primitive> primitives_;
    std::string name_;
};

/// Memoized ground-truth renders of one scene, keyed by exact pose.
class GroundTruth {
public:
    explicit GroundTruth(const SyntheticScene& scene,
                         renderer::QuadratureConfig quadrature = renderer::QuadratureConfig::evaluation(),
                         std::size_t capacity = 512);

    [[nodiscard]] const SyntheticScene& scene() const { return scene_; }
    [[nodiscard]] const renderer::QuadratureConfig& quadrature() const { return quadrature_; }
    [[nodiscard]] std::shared_ptr<const renderer::RenderedView> render(const camera::CameraPose& pose) const;

private:
    const SyntheticScene& scene_;
    renderer::QuadratureConfig quadrature_;
    std::size_t capacity_;
    mutable std::shared_mutex mutex_;
    mutable std::map<std::string, std::shared_ptr<const renderer::RenderedView>> cache_;
};

/// The "text" of the multi-view path is the scene identity the provider is
/// bound to; the condition carries the camera set.
struct TextCondition {
    std::span<const camera::CameraPose> poses;
};

struct ImageCondition {
    const Image* reference_view = nullptr;  // rendered x^j, values in [0, 1]
    camera::CameraPose reference_pose;
    camera::RelativeExtrinsic relative;     // reference -> target
};

/// Multi-view denoiser x_hat(z_t; y, c, t), one prediction per pose.
class MultiviewScoreProvider {
public:
    virtual ~MultiviewScoreProvider() = default;
    virtual std::vector<Image> denoise(std::span<const Image> z_t, int t, const TextCondition& condition) const = 0;
    virtual std::vector<Image> denoise_unconditional(std::span<const Image> z_t, int t,
                                                     const TextCondition& condition) const = 0;
};

/// Novel-view denoiser x_hat(z_t^i; x^j, c^(j->i), t).
class NovelViewScoreProvider {
public:
    virtual ~NovelViewScoreProvider() = default;
    virtual Image denoise(const Image& z_t, int t, const ImageCondition& condition,
                          const camera::CameraPose& target) const = 0;
    virtual Image denoise_unconditional(const Image& z_t, int t, const ImageCondition& condition,
                                        const camera::CameraPose& target) const = 0;
};

/// Per-channel mean of `image`, broadcast to every pixel.
[[nodiscard]] Image channel_mean_image(const Image& image);

/// Returns the ground-truth render at every pose regardless of z_t and t.
class GtMultiviewOracle final : public MultiviewScoreProvider {
public:
    explicit GtMultiviewOracle(const GroundTruth& gt) : gt_(gt) {}
    std::vector<Image> denoise(std::span<const Image> z_t, int t, const TextCondition& condition) const override;
    std::vector<Image> denoise_unconditional(std::span<const Image> z_t, int t,
                                             const TextCondition& condition) const override;

private:
    const GroundTruth& gt_;
};

enum class Pathology { hue_drift, ghost_content, attenuation };

[[nodiscard]] Pathology parse_pathology(const std::string& name);
[[nodiscard]] std::string to_string(Pathology p);

struct PathologyConfig {
    Pathology kind = Pathology::hue_drift;
    /// hue_drift: degrees of hue per degree of |azimuth|; ghost_content: peak
    /// blend weight (reached at the back view); attenuation: fraction of the
    /// object faded to background on the (0, 180) azimuth half.
    double amplitude = 0.0;
};

/// Ground truth corrupted as a function of the camera azimuth.
[[nodiscard]] Image apply_pathology(const Image& gt, const camera::CameraPose& pose, const PathologyConfig& config,
                                    const Vec3& background);

class PerturbedMultiviewOracle final : public MultiviewScoreProvider {
public:
    PerturbedMultiviewOracle(const GroundTruth& gt, PathologyConfig pathology) : gt_(gt), pathology_(pathology) {}
    std::vector<Image> denoise(std::span<const Image> z_t, int t, const TextCondition& condition) const override;
    std::vector<Image> denoise_unconditional(std::span<const Image> z_t, int t,
                                             const TextCondition& condition) const override;

private:
    const GroundTruth& gt_;
    PathologyConfig pathology_;
};

struct WarpConfig {
    double surface_opacity = 0.5;    // ground-truth opacity above which a pixel is a surface hit
    double occlusion_tolerance = 0.1;  // world units
};

struct WarpResult {
    Image image;  // 3 channels
    Image mask;   // 1 channel: 1 where a visible source surface pixel landed
};

/// Forward-warps `source` (seen from `source_pose`) into `target_pose` using
/// ground-truth depth: surface pixels are unprojected and splatted with a
/// z-buffer, background pixels are reprojected at infinity, and target pixels
/// that receive nothing visible are filled from the ground-truth render.
[[nodiscard]] WarpResult warp_view(const GroundTruth& gt, const Image& source, const camera::CameraPose& source_pose,
                                   const camera::CameraPose& target_pose, const WarpConfig& config = {});

class NovelViewOracle final : public NovelViewScoreProvider {
public:
    explicit NovelViewOracle(const GroundTruth& gt, WarpConfig config = {}) : gt_(gt), config_(config) {}
    Image denoise(const Image& z_t, int t, const ImageCondition& condition,
                  const camera::CameraPose& target) const override;
    Image denoise_unconditional(const Image& z_t, int t, const ImageCondition& condition,
                                const camera::CameraPose& target) const override;

private:
    const GroundTruth& gt_;
    WarpConfig config_;
};

Vec3 rgb_to_hsv(const Vec3& rgb);
Vec3 hsv_to_rgb(const Vec3& hsv);
Vec3 rotate_hue(const Vec3& rgb, double degrees);
[[nodiscard]] Image mirror_horizontal(const Image& image);

}  // namespace dualscore::scores
