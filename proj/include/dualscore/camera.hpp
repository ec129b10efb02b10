#pragma once

#include "dualscore/common.hpp"

#include <random>
#include <utility>
#include <vector>

namespace dualscore::camera {

struct Resolution {
    int width = 64;
    int height = 64;

    bool operator==(const Resolution&) const = default;
};

/// Pinhole camera. `rotation` maps world directions into the camera frame
/// (x right, y down, z forward); `position` is the camera center in world units.
struct CameraPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 position = Vec3::Zero();
    double fov_deg = 40.0;  // vertical field of view, square pixels
    Resolution resolution;

    /// Throws Error when the rotation is not orthonormal, fov is outside
    /// (0, 180) or the position is not finite.
    void validate() const;

    [[nodiscard]] Vec3 forward() const { return rotation.row(2).transpose(); }
    [[nodiscard]] Vec3 translation() const { return -rotation * position; }
    [[nodiscard]] double focal_pixels() const;
};

/// Transform taking `from`'s camera frame to `to`'s camera frame:
///   x_to = rotation * x_from + translation.
struct RelativeExtrinsic {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    [[nodiscard]] RelativeExtrinsic compose(const RelativeExtrinsic& first) const;
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();
    double t_near = 0.0;
    double t_far = 0.0;
    bool hits_bounds = false;  // false => background-only pixel
};

struct RayGrid {
    Resolution resolution;
    std::vector<Ray> rays;  // row-major, one per pixel

    [[nodiscard]] const Ray& at(int x, int y) const { return rays[static_cast<std::size_t>(y) * resolution.width + x]; }
};

struct SceneBounds {
    double radius = 1.0;
};

struct Range {
    double min = 0.0;
    double max = 0.0;
};

/// Bounds of the random view policy. Angles in degrees.
struct ViewSamplingConfig {
    Range fov_deg{15.0, 60.0};
    Range elevation_deg{0.0, 30.0};
    Range novel_elevation_deg{-30.0, 80.0};
    Range azimuth_deg{-180.0, 180.0};
    Range distance_scale{0.8, 1.0};
    double object_size = 0.5;
    Resolution resolution;

    void validate() const;
};

/// Spherical placement of a camera around the origin. Azimuth 0 is the front
/// (-Y) side, increasing counter-clockwise seen from +Z; elevation is measured
/// from the XY plane, positive toward +Z.
struct Orbit {
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
    double distance = 1.0;
};

[[nodiscard]] Vec3 orbit_position(const Orbit& orbit);
[[nodiscard]] Orbit orbit_of(const CameraPose& pose);

/// Camera at `position` looking at `target` with world +Z as up (+X when the
/// view direction is parallel to Z).
[[nodiscard]] CameraPose look_at(const Vec3& position, const Vec3& target, double fov_deg, Resolution resolution);
[[nodiscard]] CameraPose orbit_pose(const Orbit& orbit, double fov_deg, Resolution resolution);

/// Distance placing an object of `object_size` at the NDC focal length
/// 1/tan(fov/2), times `scale`.
[[nodiscard]] double camera_distance(double fov_deg, double object_size, double scale);

[[nodiscard]] RelativeExtrinsic relative_extrinsic(const CameraPose& from, const CameraPose& to);
[[nodiscard]] RelativeExtrinsic inverse(const RelativeExtrinsic& rel);

/// `n` poses sharing one fov/elevation/distance draw with azimuths spaced
/// 360/n degrees apart from a random base azimuth.
[[nodiscard]] std::vector<CameraPose> sample_reference_views(std::mt19937_64& rng, int n, const ViewSamplingConfig& config);

struct NovelViewPair {
    CameraPose target;
    RelativeExtrinsic relative;  // reference -> target
};

[[nodiscard]] NovelViewPair sample_novel_view_pair(std::mt19937_64& rng, const CameraPose& reference,
                                                   const ViewSamplingConfig& config);

[[nodiscard]] RayGrid generate_rays(const CameraPose& pose, const SceneBounds& bounds = {});

/// Ray through the center of pixel (x, y) without bounds clipping.
[[nodiscard]] Vec3 pixel_direction(const CameraPose& pose, double px, double py);

/// Projects a world point; returns false when it lies behind the camera.
bool project(const CameraPose& pose, const Vec3& world, double& px, double& py, double& depth_z);

}  // namespace dualscore::camera
